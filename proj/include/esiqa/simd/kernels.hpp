#pragma once

// Dense double-precision inner loops used by the tensor engine.
//
// Every kernel exists as a scalar reference in `esiqa::simd::scalar` and as
// an AVX2+FMA variant in `esiqa::simd::avx2`. The free functions in
// `esiqa::simd` dispatch to the best variant the running CPU supports. The
// choice is made once on first use and can be overridden with `force_isa`
// (tests) or the ESIQA_ISA environment variable ("scalar" or "avx2").

#include <cstddef>
#include <span>
#include <string_view>

namespace esiqa::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// True when the variant is compiled in and the CPU supports it.
bool isa_available(Isa isa);

Isa active_isa();

/// Throws std::invalid_argument when `isa` is not available on this machine.
void force_isa(Isa isa);

// Row-major C[m,n] (+)= A[m,k] * B[k,n]. Leading dimensions equal the row
// widths; callers materialize transposes.
struct GemmArgs {
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    const double* a = nullptr;
    const double* b = nullptr;
    double* c = nullptr;
    bool accumulate = false;
};

#define ESIQA_SIMD_KERNEL_DECLS                                                           \
    double dot(std::span<const double> a, std::span<const double> b);                     \
    double sum(std::span<const double> a);                                                \
    void axpy(double alpha, std::span<const double> x, std::span<double> y);              \
    void add(std::span<const double> a, std::span<const double> b, std::span<double> out); \
    void sub(std::span<const double> a, std::span<const double> b, std::span<double> out); \
    void mul(std::span<const double> a, std::span<const double> b, std::span<double> out); \
    void scale(std::span<const double> a, double s, std::span<double> out);               \
    void gemm(const GemmArgs& args);

namespace scalar {
ESIQA_SIMD_KERNEL_DECLS
}

namespace avx2 {
ESIQA_SIMD_KERNEL_DECLS
}

ESIQA_SIMD_KERNEL_DECLS

#undef ESIQA_SIMD_KERNEL_DECLS

}  // namespace esiqa::simd
