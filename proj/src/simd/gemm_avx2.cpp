#include "pvae/simd/gemm.hpp"

#include <immintrin.h>

namespace pvae::simd::kernels {

namespace {

// 4 x 8 register tile: 8 accumulators, two B loads and four A broadcasts per k.
inline void tile_4x8(std::size_t k, const double* a, std::size_t lda,
                     const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    __m256d c00 = _mm256_loadu_pd(c + 0 * ldc), c01 = _mm256_loadu_pd(c + 0 * ldc + 4);
    __m256d c10 = _mm256_loadu_pd(c + 1 * ldc), c11 = _mm256_loadu_pd(c + 1 * ldc + 4);
    __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
    __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
    const double* a0 = a;
    const double* a1 = a + lda;
    const double* a2 = a + 2 * lda;
    const double* a3 = a + 3 * lda;
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * ldb;
        const __m256d b0 = _mm256_loadu_pd(bp);
        const __m256d b1 = _mm256_loadu_pd(bp + 4);
        __m256d av = _mm256_broadcast_sd(a0 + p);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a1 + p);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a2 + p);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a3 + p);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
    }
    _mm256_storeu_pd(c + 0 * ldc, c00); _mm256_storeu_pd(c + 0 * ldc + 4, c01);
    _mm256_storeu_pd(c + 1 * ldc, c10); _mm256_storeu_pd(c + 1 * ldc + 4, c11);
    _mm256_storeu_pd(c + 2 * ldc, c20); _mm256_storeu_pd(c + 2 * ldc + 4, c21);
    _mm256_storeu_pd(c + 3 * ldc, c30); _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// One row of C, 8 columns at a time, then 4, then scalar.
inline void row_strip(std::size_t n, std::size_t k, const double* a,
                      const double* b, std::size_t ldb, double* c) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        __m256d c0 = _mm256_loadu_pd(c + j), c1 = _mm256_loadu_pd(c + j + 4);
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d av = _mm256_broadcast_sd(a + p);
            c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + j), c0);
            c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + j + 4), c1);
        }
        _mm256_storeu_pd(c + j, c0);
        _mm256_storeu_pd(c + j + 4, c1);
    }
    for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(c + j);
        for (std::size_t p = 0; p < k; ++p)
            c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb + j), c0);
        _mm256_storeu_pd(c + j, c0);
    }
    for (; j < n; ++j) {
        double acc = c[j];
        for (std::size_t p = 0; p < k; ++p) acc = __builtin_fma(a[p], b[p * ldb + j], acc);
        c[j] = acc;
    }
}

}  // namespace

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k,
               const double* a, std::size_t lda,
               const double* b, std::size_t ldb,
               double* c, std::size_t ldc) {
    const std::size_t n8 = n / 8 * 8;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        for (std::size_t j = 0; j < n8; j += 8)
            tile_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
        if (n8 < n) {
            for (std::size_t r = 0; r < 4; ++r)
                row_strip(n - n8, k, a + (i + r) * lda, b + n8, ldb, c + (i + r) * ldc + n8);
        }
    }
    for (; i < m; ++i) row_strip(n, k, a + i * lda, b, ldb, c + i * ldc);
}

}  // namespace pvae::simd::kernels
