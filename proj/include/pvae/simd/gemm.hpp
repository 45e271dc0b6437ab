#pragma once

#include <cstddef>
#include <string_view>

namespace pvae::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// Whether the kernels for `isa` were compiled in and the CPU supports them.
bool isa_available(Isa isa);

// Kernel set used by gemm(). Chosen once from the CPU at first use; the
// PVAE_ISA environment variable ("scalar" / "avx2") overrides it.
Isa active_isa();
void set_active_isa(Isa isa);

// C[m x n] += A[m x k] * B[k x n], row-major with leading dimensions.
void gemm(std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda,
          const double* b, std::size_t ldb,
          double* c, std::size_t ldc);

// dst[n x m] = src[m x n]^T
void transpose(std::size_t m, std::size_t n, const double* src, std::size_t lds,
               double* dst, std::size_t ldd);

namespace kernels {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k,
                 const double* a, std::size_t lda,
                 const double* b, std::size_t ldb,
                 double* c, std::size_t ldc);

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc);

}  // namespace kernels

}  // namespace pvae::simd
