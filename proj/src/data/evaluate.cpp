#include "esiqa/data/evaluate.hpp"

#include <cmath>

#include "esiqa/data/trainer.hpp"
#include "esiqa/metrics/correlation.hpp"
#include "esiqa/metrics/logistic.hpp"

namespace esiqa::data {

RawScores raw_scores_from_ratings(const std::vector<stats::RatingRecord>& records, DisplayMode mode) {
    const auto report = stats::reject_outlier_subjects(records, mode);
    RawScores raw;
    for (const auto& z : stats::zscore_normalize(records, report.retained, mode)) raw[z.image_id].push_back(z.z_prime);
    return raw;
}

Evaluation evaluate_scores(const std::string& method, DisplayMode mode, MetricScores scores, const RawScores* raw) {
    if (scores.predicted.empty()) throw std::invalid_argument("evaluate: empty test set");
    Evaluation ev;
    ev.row.method = method;
    ev.row.mode = mode;
    ev.row.srcc = metrics::srcc(scores.predicted, scores.mos);
    ev.row.krcc = metrics::krcc(scores.predicted, scores.mos);
    ev.row.plcc = scores.predicted.size() >= 6 ? metrics::plcc(scores.predicted, scores.mos).plcc : std::nan("");

    if (raw) {
        std::vector<std::vector<double>> per_image;
        bool complete = true;
        for (const auto& id : scores.image_ids) {
            auto it = raw->find(id);
            if (it == raw->end()) {
                complete = false;
                break;
            }
            per_image.push_back(it->second);
        }
        if (complete && per_image.size() >= 2) {
            ev.pairs = metrics::significant_pairs(per_image);
            try {
                ev.roc_ds = metrics::roc_different_vs_similar(ev.pairs, scores.predicted);
                ev.row.auc_ds = ev.roc_ds->auc;
            } catch (const metrics::SingleClassError&) {
            }
            try {
                ev.roc_bw = metrics::roc_better_vs_worse(ev.pairs, scores.predicted);
                ev.row.auc_bw = ev.roc_bw->auc;
            } catch (const metrics::SingleClassError&) {
            }
        }
    }
    ev.scores = std::move(scores);
    return ev;
}

Evaluation evaluate(const Dataset& test, const model::EsiqaNet& net, DisplayMode mode, const RawScores* raw,
                    const std::string& method) {
    if (net.config().mode != mode) {
        throw ModeMismatchError("evaluate: checkpoint was trained for mode " + std::string(mode_name(net.config().mode)) +
                                ", requested " + std::string(mode_name(mode)));
    }
    if (test.mode != mode) {
        throw ModeMismatchError("evaluate: dataset was loaded for mode " + std::string(mode_name(test.mode)));
    }
    if (test.samples.empty()) throw std::invalid_argument("evaluate: empty test set");
    MetricScores scores;
    for (const auto& s : test.samples) {
        if (!s.label) throw LabelMissingError("evaluate: no MOS label for image " + s.image_id);
        scores.image_ids.push_back(s.image_id);
        scores.mos.push_back(*s.label);
    }
    scores.predicted = predict(net, test);
    return evaluate_scores(method, mode, std::move(scores), raw);
}

}  // namespace esiqa::data
