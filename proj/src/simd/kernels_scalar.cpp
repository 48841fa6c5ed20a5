#include "esiqa/simd/kernels.hpp"

#include <algorithm>
#include <cassert>

namespace esiqa::simd::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a) acc += v;
    return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
}

void scale(std::span<const double> a, double s, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
}

void gemm(const GemmArgs& g) {
    if (!g.accumulate) std::fill(g.c, g.c + g.m * g.n, 0.0);
    for (std::size_t i = 0; i < g.m; ++i) {
        double* crow = g.c + i * g.n;
        const double* arow = g.a + i * g.k;
        for (std::size_t p = 0; p < g.k; ++p) {
            const double aip = arow[p];
            const double* brow = g.b + p * g.n;
            for (std::size_t j = 0; j < g.n; ++j) crow[j] += aip * brow[j];
        }
    }
}

}  // namespace esiqa::simd::scalar
