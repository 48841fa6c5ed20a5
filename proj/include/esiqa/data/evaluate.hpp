#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/data/manifest.hpp"
#include "esiqa/data/reports.hpp"
#include "esiqa/metrics/roc.hpp"
#include "esiqa/model/esiqanet.hpp"

namespace esiqa::data {

struct ModeMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Per-image z′ scores of every retained subject, keyed by image id.
using RawScores = std::map<std::string, std::vector<double>>;

/// Builds RawScores for one mode from a ratings table (screening included).
RawScores raw_scores_from_ratings(const std::vector<stats::RatingRecord>& records, DisplayMode mode);

struct MetricScores {
    std::vector<std::string> image_ids;
    std::vector<double> predicted;
    std::vector<double> mos;
};

struct Evaluation {
    MetricScores scores;
    EvaluationRow row;
    std::optional<metrics::RocResult> roc_ds;
    std::optional<metrics::RocResult> roc_bw;
    std::vector<metrics::ImagePair> pairs;
};

/// Correlations of predictions against MOS and, when raw scores cover every
/// image, both ROC analyses. PLCC needs at least 6 images and is NaN below.
Evaluation evaluate_scores(const std::string& method, DisplayMode mode, MetricScores scores, const RawScores* raw = nullptr);

/// Eval-mode forward over the test set, then evaluate_scores.
Evaluation evaluate(const Dataset& test, const model::EsiqaNet& net, DisplayMode mode, const RawScores* raw = nullptr,
                    const std::string& method = "esiqanet");

}  // namespace esiqa::data
