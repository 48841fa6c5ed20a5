#include "esiqa/data/reports.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "esiqa/csv.hpp"

namespace esiqa::data {

double Histogram::mean() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

Histogram make_histogram(std::string series, const std::vector<double>& values, double width, double lo, double hi) {
    if (!(width > 0.0) || !(hi >= lo)) throw ReportError("histogram: invalid binning");
    Histogram h;
    h.series = std::move(series);
    h.width = width;
    h.first_bin = static_cast<int>(std::floor(lo / width + 0.5));
    const int last_bin = static_cast<int>(std::floor(hi / width + 0.5));
    h.counts.assign(static_cast<std::size_t>(last_bin - h.first_bin + 1), 0);
    h.values = values;
    for (double v : values) {
        const int k = std::clamp(static_cast<int>(std::floor(v / width + 0.5)), h.first_bin, last_bin);
        ++h.counts[static_cast<std::size_t>(k - h.first_bin)];
    }
    return h;
}

namespace {

std::map<std::string, double> by_image(const std::vector<stats::MosEntry>& entries) {
    std::map<std::string, double> m;
    for (const auto& e : entries) m[e.image_id] = e.mos;
    return m;
}

}  // namespace

MosReports mos_reports(const MosTables& tables, const Manifest* manifest, double mos_bin, double diff_bin) {
    if (tables.empty()) throw ReportError("mos_reports: no MOS tables");
    MosReports out;
    for (const auto& [mode, entries] : tables) {
        std::vector<double> v;
        for (const auto& e : entries) v.push_back(e.mos);
        out.per_mode.push_back(make_histogram("mos_" + std::string(mode_name(mode)), v, mos_bin, 0.0, 100.0));
    }

    const std::pair<DisplayMode, DisplayMode> orderings[] = {
        {DisplayMode::window_3d, DisplayMode::immersive_3d},
        {DisplayMode::immersive_3d, DisplayMode::flat_2d},
        {DisplayMode::window_3d, DisplayMode::flat_2d},
    };
    for (const auto& [a, b] : orderings) {
        auto ia = tables.find(a), ib = tables.find(b);
        if (ia == tables.end() || ib == tables.end()) continue;
        const auto ma = by_image(ia->second), mb = by_image(ib->second);
        std::vector<double> diffs;
        for (const auto& [id, mos] : ma) {
            auto it = mb.find(id);
            if (it != mb.end()) diffs.push_back(mos - it->second);
        }
        if (diffs.size() != ma.size() || diffs.size() != mb.size()) {
            throw ReportError("mos_reports: modes " + std::string(mode_name(a)) + " and " + std::string(mode_name(b)) +
                              " cover different image sets");
        }
        out.differences.push_back(make_histogram(std::string(mode_name(a)) + "-" + std::string(mode_name(b)), diffs, diff_bin,
                                                  -100.0, 100.0));
    }

    if (manifest) {
        std::map<std::string, std::string> captured;
        for (const auto& e : manifest->entries) {
            if (e.source == Source::captured) captured[e.scene_id] = e.image_id;
        }
        for (const auto& [mode, entries] : tables) {
            const auto m = by_image(entries);
            std::vector<double> diffs;
            for (const auto& e : manifest->entries) {
                if (e.source != Source::synthesized) continue;
                auto cap = captured.find(e.scene_id);
                if (cap == captured.end()) {
                    throw ReportError("mos_reports: synthesized image " + e.image_id + " references scene " + e.scene_id +
                                      " with no captured image");
                }
                auto syn = m.find(e.image_id), ref = m.find(cap->second);
                if (syn == m.end() || ref == m.end()) continue;
                diffs.push_back(syn->second - ref->second);
            }
            out.matched.push_back(make_histogram("synthesized-captured_" + std::string(mode_name(mode)), diffs, diff_bin,
                                                 -100.0, 100.0));
        }
    }
    return out;
}

void write_histograms(std::ostream& out, const std::vector<Histogram>& histograms) {
    csv::write_row(out, {"series", "bin_center", "bin_lo", "bin_hi", "count"});
    for (const auto& h : histograms) {
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            const double c = h.center(i);
            csv::write_row(out, {h.series, csv::fmt(c), csv::fmt(c - 0.5 * h.width), csv::fmt(c + 0.5 * h.width),
                                 std::to_string(h.counts[i])});
        }
    }
}

void write_evaluation(std::ostream& out, const std::vector<EvaluationRow>& rows) {
    out << kEvaluationHeader << '\n';
    for (const auto& r : rows) {
        csv::write_row(out, {r.method, std::string(mode_name(r.mode)), csv::fmt(r.srcc), csv::fmt(r.krcc), csv::fmt(r.plcc),
                             r.auc_ds ? csv::fmt(*r.auc_ds) : "", r.auc_bw ? csv::fmt(*r.auc_bw) : ""});
    }
}

void write_predictions(std::ostream& out, DisplayMode mode, const std::vector<std::string>& ids,
                       const std::vector<double>& predictions, const std::vector<double>& mos) {
    csv::write_row(out, {"image_id", "mode", "prediction", "mos"});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        csv::write_row(out, {ids[i], std::string(mode_name(mode)), csv::fmt(predictions[i]), csv::fmt(mos[i])});
    }
}

}  // namespace esiqa::data
