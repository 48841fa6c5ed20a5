#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/data/manifest.hpp"
#include "esiqa/metrics/roc.hpp"
#include "esiqa/stats/subjective.hpp"

namespace esiqa::data {

struct ReportError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Bins of equal width; bin k covers [origin + (k−½)·width, origin + (k+½)·width).
struct Histogram {
    std::string series;
    double origin = 0.0;
    double width = 1.0;
    int first_bin = 0;
    std::vector<std::size_t> counts;
    std::vector<double> values;  // the raw samples

    double center(std::size_t i) const { return origin + (first_bin + static_cast<int>(i)) * width; }
    double mean() const;
};

Histogram make_histogram(std::string series, const std::vector<double>& values, double width, double lo, double hi);

using MosTables = std::map<DisplayMode, std::vector<stats::MosEntry>>;

struct MosReports {
    std::vector<Histogram> per_mode;     // "mos_2d", ...
    std::vector<Histogram> differences;  // "3d_window-3d_immersive", "3d_immersive-2d", "3d_window-2d"
    std::vector<Histogram> matched;      // "synthesized-captured_<mode>"
};

/// Per-mode histograms, per-image mode differences over the images present in
/// both modes, and synthesized minus captured differences per scene when a
/// manifest is given. A synthesized entry whose scene has no captured entry
/// throws ReportError.
MosReports mos_reports(const MosTables& tables, const Manifest* manifest = nullptr, double mos_bin = 5.0,
                       double diff_bin = 5.0);

/// series,bin_center,bin_lo,bin_hi,count
void write_histograms(std::ostream& out, const std::vector<Histogram>& histograms);

struct EvaluationRow {
    std::string method;
    DisplayMode mode = DisplayMode::flat_2d;
    double srcc = 0.0;
    double krcc = 0.0;
    double plcc = 0.0;
    std::optional<double> auc_ds;
    std::optional<double> auc_bw;
};

inline constexpr const char* kEvaluationHeader = "method,mode,srcc,krcc,plcc,auc_ds,auc_bw";
void write_evaluation(std::ostream& out, const std::vector<EvaluationRow>& rows);

/// image_id,mode,prediction,mos
void write_predictions(std::ostream& out, DisplayMode mode, const std::vector<std::string>& ids,
                       const std::vector<double>& predictions, const std::vector<double>& mos);

}  // namespace esiqa::data
