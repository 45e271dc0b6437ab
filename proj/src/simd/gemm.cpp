#include "pvae/simd/gemm.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>

namespace pvae::simd {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa detect() {
    if (const char* env = std::getenv("PVAE_ISA")) {
        const std::string v(env);
        if (v == "scalar") return Isa::scalar;
        if (v == "avx2" && isa_available(Isa::avx2)) return Isa::avx2;
    }
    return isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<int>& active_slot() {
    static std::atomic<int> slot{static_cast<int>(detect())};
    return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_available(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(PVAE_HAVE_AVX2_KERNELS)
            return cpu_has_avx2();
#else
            return false;
#endif
    }
    return false;
}

Isa active_isa() { return static_cast<Isa>(active_slot().load(std::memory_order_relaxed)); }

void set_active_isa(Isa isa) {
    if (isa_available(isa)) active_slot().store(static_cast<int>(isa), std::memory_order_relaxed);
}

void gemm(std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda,
          const double* b, std::size_t ldb,
          double* c, std::size_t ldc) {
    if (m == 0 || n == 0 || k == 0) return;
#if defined(PVAE_HAVE_AVX2_KERNELS)
    if (active_isa() == Isa::avx2) {
        kernels::gemm_avx2(m, n, k, a, lda, b, ldb, c, ldc);
        return;
    }
#endif
    kernels::gemm_scalar(m, n, k, a, lda, b, ldb, c, ldc);
}

void transpose(std::size_t m, std::size_t n, const double* src, std::size_t lds,
               double* dst, std::size_t ldd) {
    constexpr std::size_t block = 32;
    for (std::size_t i0 = 0; i0 < m; i0 += block)
        for (std::size_t j0 = 0; j0 < n; j0 += block)
            for (std::size_t i = i0; i < std::min(m, i0 + block); ++i)
                for (std::size_t j = j0; j < std::min(n, j0 + block); ++j)
                    dst[j * ldd + i] = src[i * lds + j];
}

}  // namespace pvae::simd

#if !defined(PVAE_HAVE_AVX2_KERNELS)
namespace pvae::simd::kernels {
void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    gemm_scalar(m, n, k, a, lda, b, ldb, c, ldc);
}
}  // namespace pvae::simd::kernels
#endif
