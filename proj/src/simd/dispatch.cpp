#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "esiqa/simd/kernels.hpp"

namespace esiqa::simd {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa detect() {
    if (const char* env = std::getenv("ESIQA_ISA")) {
        const std::string want(env);
        if (want == "scalar") return Isa::scalar;
        if (want == "avx2" && cpu_has_avx2()) return Isa::avx2;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
    if (!isa_available(isa)) {
        throw std::invalid_argument("simd: ISA " + std::string(isa_name(isa)) + " not available");
    }
    current().store(isa, std::memory_order_relaxed);
}

#define ESIQA_DISPATCH(CALL) \
    return active_isa() == Isa::avx2 ? avx2::CALL : scalar::CALL

double dot(std::span<const double> a, std::span<const double> b) { ESIQA_DISPATCH(dot(a, b)); }
double sum(std::span<const double> a) { ESIQA_DISPATCH(sum(a)); }
void axpy(double alpha, std::span<const double> x, std::span<double> y) { ESIQA_DISPATCH(axpy(alpha, x, y)); }
void add(std::span<const double> a, std::span<const double> b, std::span<double> out) { ESIQA_DISPATCH(add(a, b, out)); }
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) { ESIQA_DISPATCH(sub(a, b, out)); }
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) { ESIQA_DISPATCH(mul(a, b, out)); }
void scale(std::span<const double> a, double s, std::span<double> out) { ESIQA_DISPATCH(scale(a, s, out)); }
void gemm(const GemmArgs& args) { ESIQA_DISPATCH(gemm(args)); }

#undef ESIQA_DISPATCH

}  // namespace esiqa::simd
