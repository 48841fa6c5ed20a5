#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace esiqa::metrics {

/// ŷ = β1(0.5 − 1/(1+exp(β2(y−β3)))) + β4·y + β5
struct LogisticParams {
    double beta1 = 0.0;
    double beta2 = 1.0;
    double beta3 = 0.0;
    double beta4 = 0.0;
    double beta5 = 0.0;

    std::array<double, 5> as_array() const { return {beta1, beta2, beta3, beta4, beta5}; }
    static LogisticParams from_array(const std::array<double, 5>& b) { return {b[0], b[1], b[2], b[3], b[4]}; }
    double operator()(double y) const;
};

struct LogisticFit {
    LogisticParams params;
    double residual = 0.0;  // Σ(ŷ − mos)²
    bool converged = false;
    std::size_t iterations = 0;
};

struct LogisticOptions {
    std::size_t max_iterations = 500;
    std::size_t jitter_starts = 5;
    unsigned long long seed = 12345;
};

/// Levenberg-Marquardt least squares over several starts; the best result is
/// returned even when no start converged (converged = false then).
LogisticFit fit_logistic(std::span<const double> y, std::span<const double> mos, const LogisticOptions& options = {});

std::vector<double> apply_logistic(const LogisticParams& p, std::span<const double> y);

struct PlccResult {
    double plcc = 0.0;
    LogisticFit fit;
};

/// Pearson correlation between the logistic-mapped predictions and mos.
PlccResult plcc(std::span<const double> y, std::span<const double> mos, const LogisticOptions& options = {});

}  // namespace esiqa::metrics
