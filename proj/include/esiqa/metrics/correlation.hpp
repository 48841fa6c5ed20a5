#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace esiqa::metrics {

struct ConstantVectorError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Ascending ranks starting at 1; ties share their mean rank.
std::vector<double> midranks(std::span<const double> x);

/// Pearson product-moment correlation. Length ≥ 2 and equal; throws
/// ConstantVectorError when either vector has zero spread.
double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman correlation: Pearson of midranks. Length ≥ 3.
double srcc(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b, O(n log n). Length ≥ 3.
double krcc(std::span<const double> x, std::span<const double> y);

/// Shared argument checks: equal length ≥ min_len, all finite.
void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len, const char* who);

}  // namespace esiqa::metrics
