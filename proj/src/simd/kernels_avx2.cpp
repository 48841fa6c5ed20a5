#include "esiqa/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define ESIQA_HAVE_AVX2 1
#define ESIQA_AVX2_TARGET __attribute__((target("avx2,fma")))
#else
#define ESIQA_HAVE_AVX2 0
#define ESIQA_AVX2_TARGET
#endif

namespace esiqa::simd::avx2 {

#if ESIQA_HAVE_AVX2

namespace {

ESIQA_AVX2_TARGET inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

// 4x8 register tile of C. Rows past `rows` are neither loaded nor stored.
ESIQA_AVX2_TARGET void gemm_tile_4x8(const GemmArgs& g, std::size_t i0, std::size_t rows, std::size_t j0) {
    __m256d acc[4][2];
    for (std::size_t r = 0; r < 4; ++r) {
        if (r < rows && g.accumulate) {
            acc[r][0] = _mm256_loadu_pd(g.c + (i0 + r) * g.n + j0);
            acc[r][1] = _mm256_loadu_pd(g.c + (i0 + r) * g.n + j0 + 4);
        } else {
            acc[r][0] = _mm256_setzero_pd();
            acc[r][1] = _mm256_setzero_pd();
        }
    }
    for (std::size_t p = 0; p < g.k; ++p) {
        const double* brow = g.b + p * g.n + j0;
        const __m256d b0 = _mm256_loadu_pd(brow);
        const __m256d b1 = _mm256_loadu_pd(brow + 4);
        for (std::size_t r = 0; r < rows; ++r) {
            const __m256d a = _mm256_broadcast_sd(g.a + (i0 + r) * g.k + p);
            acc[r][0] = _mm256_fmadd_pd(a, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_pd(a, b1, acc[r][1]);
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        _mm256_storeu_pd(g.c + (i0 + r) * g.n + j0, acc[r][0]);
        _mm256_storeu_pd(g.c + (i0 + r) * g.n + j0 + 4, acc[r][1]);
    }
}

}  // namespace

ESIQA_AVX2_TARGET double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i]), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[i + 4]), _mm256_loadu_pd(&b[i + 4]), acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
    return acc;
}

ESIQA_AVX2_TARGET double sum(std::span<const double> a) {
    const std::size_t n = a.size();
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(&a[i]));
    double total = hsum(acc);
    for (; i < n; ++i) total += a[i];
    return total;
}

ESIQA_AVX2_TARGET void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    const std::size_t n = x.size();
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(&y[i], _mm256_fmadd_pd(va, _mm256_loadu_pd(&x[i]), _mm256_loadu_pd(&y[i])));
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

#define ESIQA_AVX2_BINARY(NAME, INTRIN, OP)                                                         \
    ESIQA_AVX2_TARGET void NAME(std::span<const double> a, std::span<const double> b,               \
                                std::span<double> out) {                                            \
        const std::size_t n = out.size();                                                           \
        std::size_t i = 0;                                                                          \
        for (; i + 4 <= n; i += 4) {                                                                \
            _mm256_storeu_pd(&out[i], INTRIN(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i])));      \
        }                                                                                           \
        for (; i < n; ++i) out[i] = a[i] OP b[i];                                                   \
    }

ESIQA_AVX2_BINARY(add, _mm256_add_pd, +)
ESIQA_AVX2_BINARY(sub, _mm256_sub_pd, -)
ESIQA_AVX2_BINARY(mul, _mm256_mul_pd, *)

#undef ESIQA_AVX2_BINARY

ESIQA_AVX2_TARGET void scale(std::span<const double> a, double s, std::span<double> out) {
    const std::size_t n = out.size();
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(&out[i], _mm256_mul_pd(_mm256_loadu_pd(&a[i]), vs));
    for (; i < n; ++i) out[i] = a[i] * s;
}

ESIQA_AVX2_TARGET void gemm(const GemmArgs& g) {
    const std::size_t n8 = g.n - g.n % 8;
    for (std::size_t i0 = 0; i0 < g.m; i0 += 4) {
        const std::size_t rows = std::min<std::size_t>(4, g.m - i0);
        for (std::size_t j0 = 0; j0 < n8; j0 += 8) gemm_tile_4x8(g, i0, rows, j0);
        if (n8 == g.n) continue;
        for (std::size_t r = 0; r < rows; ++r) {
            double* crow = g.c + (i0 + r) * g.n;
            const double* arow = g.a + (i0 + r) * g.k;
            for (std::size_t j = n8; j < g.n; ++j) {
                double acc = g.accumulate ? crow[j] : 0.0;
                for (std::size_t p = 0; p < g.k; ++p) acc = std::fma(arow[p], g.b[p * g.n + j], acc);
                crow[j] = acc;
            }
        }
    }
}

#else  // !ESIQA_HAVE_AVX2

double dot(std::span<const double> a, std::span<const double> b) { return scalar::dot(a, b); }
double sum(std::span<const double> a) { return scalar::sum(a); }
void axpy(double alpha, std::span<const double> x, std::span<double> y) { scalar::axpy(alpha, x, y); }
void add(std::span<const double> a, std::span<const double> b, std::span<double> out) { scalar::add(a, b, out); }
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) { scalar::sub(a, b, out); }
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) { scalar::mul(a, b, out); }
void scale(std::span<const double> a, double s, std::span<double> out) { scalar::scale(a, s, out); }
void gemm(const GemmArgs& g) { scalar::gemm(g); }

#endif

}  // namespace esiqa::simd::avx2
