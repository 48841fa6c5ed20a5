#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace esiqa::metrics {

enum class PairLabel { similar, better, worse };  // first image relative to second

struct ImagePair {
    std::size_t first = 0;
    std::size_t second = 0;
    PairLabel label = PairLabel::similar;
    double p_value = 1.0;
    double mos_difference = 0.0;  // mean(first) − mean(second)
};

struct SingleClassError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PairTest {
    double t = 0.0;
    double df = 0.0;
    double p_value = 1.0;
};

/// Two-sided Welch t-test. Zero spread in both samples gives p = 1 for equal
/// means and p = 0 otherwise.
PairTest welch_t_test(std::span<const double> a, std::span<const double> b);

/// Every unordered pair (i < j) of images classified at level alpha.
/// scores[i] holds the per-subject z′ values of image i.
std::vector<ImagePair> significant_pairs(const std::vector<std::vector<double>>& scores, double alpha = 0.05);

enum class RocKind { different_vs_similar, better_vs_worse };
const char* roc_kind_name(RocKind kind);

struct RocResult {
    RocKind kind = RocKind::different_vs_similar;
    double auc = 0.5;
    std::vector<int> labels;  // 1 = positive class
    std::vector<double> scores;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Mann-Whitney AUC, ties counted as one half. Throws SingleClassError.
double auc_mann_whitney(std::span<const double> scores, std::span<const int> labels);

/// Positive class: significantly different pairs; score |Δobjective|.
RocResult roc_different_vs_similar(const std::vector<ImagePair>& pairs, std::span<const double> objective);

/// Over significant pairs only. Positive class: first image better;
/// score objective[first] − objective[second].
RocResult roc_better_vs_worse(const std::vector<ImagePair>& pairs, std::span<const double> objective);

enum class Comparison { indistinguishable, better, worse };
const char* comparison_name(Comparison c);

struct SignificanceMatrix {
    std::vector<std::string> methods;
    std::vector<std::vector<Comparison>> cells;  // row vs column
};

/// Paired bootstrap over pairs of the AUC difference for every method pair.
SignificanceMatrix auc_significance_matrix(const std::vector<std::string>& methods, const std::vector<RocResult>& results,
                                           std::size_t resamples = 1000, double alpha = 0.05, std::uint64_t seed = 0);

std::string format_significance_matrix(const SignificanceMatrix& m);

}  // namespace esiqa::metrics
