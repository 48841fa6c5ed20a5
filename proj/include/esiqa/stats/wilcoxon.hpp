#pragma once

#include <cstddef>
#include <span>

namespace esiqa::stats {

/// Samples at or below this size on both sides use the exact null distribution.
inline constexpr std::size_t kWilcoxonExactLimit = 8;

struct RankSumResult {
    double w = 0.0;        // rank sum of the first sample (midranks)
    double p_value = 1.0;  // two-sided
    bool exact = false;
};

/// Two-sample Wilcoxon rank-sum test, two-sided. Ties get midranks.
/// Exact conditional distribution when both samples have at most
/// kWilcoxonExactLimit elements, otherwise the tie-corrected normal
/// approximation with continuity correction 0.5.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

/// Exact two-sided p-value by enumerating every relabelling of the pooled
/// sample. Exponential; meant for small samples and tests.
double wilcoxon_exact_enumeration(std::span<const double> a, std::span<const double> b);

}  // namespace esiqa::stats
