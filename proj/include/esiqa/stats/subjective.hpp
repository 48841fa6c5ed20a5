#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/stats/ratings.hpp"

namespace esiqa::stats {

struct IncompleteMatrixError : RatingsError {
    IncompleteMatrixError(const std::string& what, std::vector<std::pair<std::string, std::string>> missing)
        : RatingsError(what), missing_cells(std::move(missing)) {}
    std::vector<std::pair<std::string, std::string>> missing_cells;  // (participant, image)
};

struct ZeroVarianceError : RatingsError {
    using RatingsError::RatingsError;
};

struct EmptyInputError : RatingsError {
    using RatingsError::RatingsError;
};

/// Dense subject x image score table for one display mode. Subjects and
/// images are sorted lexicographically.
struct RatingMatrix {
    DisplayMode mode = DisplayMode::flat_2d;
    std::vector<std::string> subjects;
    std::vector<std::string> images;
    std::vector<double> scores;  // row-major [subject][image]

    double at(std::size_t subject, std::size_t image) const { return scores[subject * images.size() + image]; }
    std::vector<double> column(std::size_t image) const;
    std::vector<double> row(std::size_t subject) const;
};

/// Throws IncompleteMatrixError listing every missing (participant, image).
RatingMatrix build_matrix(const std::vector<RatingRecord>& records, DisplayMode mode);

struct SubjectStats {
    std::string participant_id;
    double mu = 0.0;
    double sigma = 0.0;  // sample standard deviation
};

std::vector<SubjectStats> subject_stats(const RatingMatrix& m);

struct SubjectScreening {
    std::string participant_id;
    std::size_t p = 0;  // scores above mean + k·std
    std::size_t q = 0;  // scores below mean − k·std
    bool rejected = false;
};

struct RejectionReport {
    std::set<std::string> retained;
    std::vector<SubjectScreening> subjects;
};

/// Kurtosis-based screening of raters. Requires at least 3 participants, a
/// complete matrix, and a nonzero score spread for every rater unless the
/// whole study is constant.
RejectionReport reject_outlier_subjects(const std::vector<RatingRecord>& records, DisplayMode mode);
RejectionReport reject_outlier_subjects(const RatingMatrix& m);

/// Sample kurtosis m4/m2² of one column; 0 for a zero-spread column.
double sample_kurtosis(const std::vector<double>& values);

struct ZScore {
    std::string participant_id;
    std::string image_id;
    DisplayMode mode = DisplayMode::flat_2d;
    double z = 0.0;        // before rescaling and clamping
    double z_prime = 0.0;  // 100(z+3)/6 clamped to [0,100]
};

double rescale_z(double z);

/// Per-record z′ for retained subjects. A constant study maps to z = 0;
/// any other zero-spread subject throws ZeroVarianceError.
std::vector<ZScore> zscore_normalize(const std::vector<RatingRecord>& records, const std::set<std::string>& retained,
                                     DisplayMode mode);

struct MosEntry {
    std::string image_id;
    DisplayMode mode = DisplayMode::flat_2d;
    double mos = 0.0;
    double std = 0.0;
    double ci_halfwidth = 0.0;
    std::size_t n_subjects = 0;
    bool single_subject = false;  // ci_halfwidth undefined, reported as 0
};

inline constexpr double kZ95 = 1.96;

/// MOS per image over the retained subjects' z′ values of one mode.
std::vector<MosEntry> compute_mos(const std::vector<ZScore>& zscores, DisplayMode mode);

/// Screening, normalization and MOS in one call.
std::vector<MosEntry> mos_pipeline(const std::vector<RatingRecord>& records, DisplayMode mode,
                                   RejectionReport* report = nullptr);

inline constexpr const char* kMosHeader = "image_id,mode,mos,std,ci_halfwidth,n_subjects";
void write_mos(std::ostream& out, const std::vector<MosEntry>& entries);
std::vector<MosEntry> read_mos(std::istream& in);
std::vector<MosEntry> read_mos_file(const std::string& path);

struct RankingTally {
    std::string option;
    std::map<int, std::size_t> frequency;  // rank -> count
    std::size_t n = 0;
};

/// Σ f·w / n. Throws std::invalid_argument for a missing weight, n = 0, or
/// frequencies exceeding n.
double ranking_score(const RankingTally& tally, const std::map<int, double>& weights);

/// Default rank weights: first 3, second 2, third 1.
std::map<int, double> default_rank_weights();

/// Mean answer per question.
std::vector<double> questionnaire_summary(const std::vector<std::vector<double>>& responses);

struct CurveOptions {
    std::vector<std::size_t> subset_sizes;
    std::size_t trials = 100;
    double alpha = 0.05;
    std::uint64_t seed = 0;
};

/// Fraction of image pairs separated by the rank-sum test on one subset of
/// subjects (rows of the matrix).
double discriminability(const RatingMatrix& m, const std::vector<std::size_t>& subjects, double alpha);

/// Mean over images of 1.96·std/√N of the given subjects' z′ scores.
double mean_ci(const std::vector<double>& zprime, std::size_t n_images, const std::vector<std::size_t>& subjects);

/// Size -> mean discriminability over random subsets of raw scores.
std::map<std::size_t, double> discriminability_curve(const std::vector<RatingRecord>& records, DisplayMode mode,
                                                     const CurveOptions& options);
std::map<std::size_t, double> discriminability_curve(const RatingMatrix& m, const CurveOptions& options);

/// Size -> mean CI half-width of z′ over random subsets.
std::map<std::size_t, double> mean_ci_curve(const std::vector<RatingRecord>& records, DisplayMode mode,
                                            const CurveOptions& options);
std::map<std::size_t, double> mean_ci_curve(const RatingMatrix& m, const CurveOptions& options);

/// z′ matrix (row-major subject x image) for every subject of m.
std::vector<double> zprime_matrix(const RatingMatrix& m);

}  // namespace esiqa::stats
