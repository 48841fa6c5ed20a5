#include "esiqa/stats/subjective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "esiqa/csv.hpp"
#include "esiqa/stats/wilcoxon.hpp"

namespace esiqa::stats {

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

bool all_equal(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::vector<std::size_t> draw_subset(std::size_t population, std::size_t size, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (population - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(size);
    return idx;
}

void check_curve_options(const CurveOptions& o, std::size_t panel) {
    if (o.subset_sizes.empty()) throw std::invalid_argument("curve: no subset sizes given");
    if (o.trials == 0) throw std::invalid_argument("curve: trials must be positive");
    for (std::size_t s : o.subset_sizes) {
        if (s > panel) {
            throw std::invalid_argument("curve: subset size " + std::to_string(s) + " exceeds panel of " +
                                        std::to_string(panel) + " participants");
        }
        if (s < 1) throw std::invalid_argument("curve: subset size must be at least 1");
    }
}

}  // namespace

std::vector<double> RatingMatrix::column(std::size_t image) const {
    std::vector<double> c(subjects.size());
    for (std::size_t s = 0; s < subjects.size(); ++s) c[s] = at(s, image);
    return c;
}

std::vector<double> RatingMatrix::row(std::size_t subject) const {
    const auto first = scores.begin() + static_cast<long>(subject * images.size());
    return {first, first + static_cast<long>(images.size())};
}

RatingMatrix build_matrix(const std::vector<RatingRecord>& records, DisplayMode mode) {
    RatingMatrix m;
    m.mode = mode;
    std::set<std::string> subjects, images;
    for (const auto& r : records) {
        if (r.mode != mode) continue;
        subjects.insert(r.participant_id);
        images.insert(r.image_id);
    }
    if (subjects.empty()) throw EmptyInputError("no ratings for mode " + std::string(mode_name(mode)));
    m.subjects.assign(subjects.begin(), subjects.end());
    m.images.assign(images.begin(), images.end());
    const std::size_t ni = m.images.size();
    m.scores.assign(m.subjects.size() * ni, std::nan(""));
    for (const auto& r : records) {
        if (r.mode != mode) continue;
        const auto s = static_cast<std::size_t>(std::lower_bound(m.subjects.begin(), m.subjects.end(), r.participant_id) - m.subjects.begin());
        const auto i = static_cast<std::size_t>(std::lower_bound(m.images.begin(), m.images.end(), r.image_id) - m.images.begin());
        m.scores[s * ni + i] = r.score;
    }
    std::vector<std::pair<std::string, std::string>> missing;
    for (std::size_t s = 0; s < m.subjects.size(); ++s) {
        for (std::size_t i = 0; i < ni; ++i) {
            if (std::isnan(m.scores[s * ni + i])) missing.emplace_back(m.subjects[s], m.images[i]);
        }
    }
    if (!missing.empty()) {
        std::string msg = "incomplete rating matrix in mode " + std::string(mode_name(mode)) + ", missing:";
        for (std::size_t k = 0; k < missing.size() && k < 20; ++k) msg += " (" + missing[k].first + ", " + missing[k].second + ")";
        if (missing.size() > 20) msg += " and " + std::to_string(missing.size() - 20) + " more";
        throw IncompleteMatrixError(msg, std::move(missing));
    }
    return m;
}

std::vector<SubjectStats> subject_stats(const RatingMatrix& m) {
    std::vector<SubjectStats> out;
    for (std::size_t s = 0; s < m.subjects.size(); ++s) {
        const auto r = m.row(s);
        out.push_back({m.subjects[s], mean_of(r), sample_std(r)});
    }
    return out;
}

double sample_kurtosis(const std::vector<double>& values) {
    const double mu = mean_of(values);
    double m2 = 0.0, m4 = 0.0;
    for (double x : values) {
        const double d2 = (x - mu) * (x - mu);
        m2 += d2;
        m4 += d2 * d2;
    }
    const double n = static_cast<double>(values.size());
    m2 /= n;
    m4 /= n;
    return m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
}

RejectionReport reject_outlier_subjects(const std::vector<RatingRecord>& records, DisplayMode mode) {
    return reject_outlier_subjects(build_matrix(records, mode));
}

RejectionReport reject_outlier_subjects(const RatingMatrix& m) {
    const std::size_t ns = m.subjects.size(), ni = m.images.size();
    if (ns < 3) throw RatingsError("outlier screening needs at least 3 participants, got " + std::to_string(ns));
    if (!all_equal(m.scores)) {
        for (const auto& st : subject_stats(m)) {
            if (st.sigma == 0.0) {
                throw ZeroVarianceError("participant " + st.participant_id +
                                        " gave the same score to every image; remove the participant before screening");
            }
        }
    }

    RejectionReport report;
    report.subjects.resize(ns);
    for (std::size_t s = 0; s < ns; ++s) report.subjects[s].participant_id = m.subjects[s];
    for (std::size_t i = 0; i < ni; ++i) {
        const auto col = m.column(i);
        const double mu = mean_of(col);
        const double sd = sample_std(col);
        const double beta2 = sample_kurtosis(col);
        const double k = (beta2 >= 2.0 && beta2 <= 4.0) ? 2.0 : std::sqrt(20.0);
        for (std::size_t s = 0; s < ns; ++s) {
            if (col[s] > mu + k * sd) ++report.subjects[s].p;
            if (col[s] < mu - k * sd) ++report.subjects[s].q;
        }
    }
    for (auto& sub : report.subjects) {
        const double pq = static_cast<double>(sub.p + sub.q);
        sub.rejected = pq / static_cast<double>(ni) > 0.05 &&
                       std::abs(static_cast<double>(sub.p) - static_cast<double>(sub.q)) / pq < 0.3;
        if (!sub.rejected) report.retained.insert(sub.participant_id);
    }
    return report;
}

double rescale_z(double z) { return std::clamp(100.0 * (z + 3.0) / 6.0, 0.0, 100.0); }

std::vector<ZScore> zscore_normalize(const std::vector<RatingRecord>& records, const std::set<std::string>& retained,
                                     DisplayMode mode) {
    std::map<std::string, std::vector<double>> by_subject;
    for (const auto& r : records) {
        if (r.mode == mode && retained.count(r.participant_id)) by_subject[r.participant_id].push_back(r.score);
    }
    if (by_subject.empty()) throw EmptyInputError("no retained subjects with ratings in mode " + std::string(mode_name(mode)));

    std::vector<double> everything;
    for (const auto& [id, v] : by_subject) everything.insert(everything.end(), v.begin(), v.end());
    const bool constant_study = all_equal(everything);

    std::map<std::string, std::pair<double, double>> moments;
    for (const auto& [id, v] : by_subject) {
        const double sd = sample_std(v);
        if (sd == 0.0 && !constant_study) {
            throw ZeroVarianceError("participant " + id + " has zero score variance in mode " + std::string(mode_name(mode)));
        }
        moments[id] = {mean_of(v), sd};
    }

    std::vector<ZScore> out;
    for (const auto& r : records) {
        if (r.mode != mode || !retained.count(r.participant_id)) continue;
        const auto [mu, sd] = moments.at(r.participant_id);
        const double z = constant_study ? 0.0 : (r.score - mu) / sd;
        out.push_back({r.participant_id, r.image_id, mode, z, rescale_z(z)});
    }
    return out;
}

std::vector<MosEntry> compute_mos(const std::vector<ZScore>& zscores, DisplayMode mode) {
    std::map<std::string, std::vector<double>> by_image;
    std::map<std::string, std::set<std::string>> raters;
    std::set<std::string> subjects;
    for (const auto& z : zscores) {
        if (z.mode != mode) continue;
        by_image[z.image_id].push_back(z.z_prime);
        raters[z.image_id].insert(z.participant_id);
        subjects.insert(z.participant_id);
    }
    if (subjects.empty()) throw EmptyInputError("compute_mos: empty subject set for mode " + std::string(mode_name(mode)));
    for (const auto& [image, who] : raters) {
        if (who.size() != subjects.size()) {
            throw IncompleteMatrixError("compute_mos: image " + image + " rated by " + std::to_string(who.size()) + " of " +
                                            std::to_string(subjects.size()) + " retained subjects",
                                        {});
        }
    }
    std::vector<MosEntry> out;
    for (const auto& [image, v] : by_image) {
        MosEntry e;
        e.image_id = image;
        e.mode = mode;
        e.n_subjects = v.size();
        e.mos = mean_of(v);
        e.std = sample_std(v);
        e.single_subject = v.size() == 1;
        e.ci_halfwidth = e.single_subject ? 0.0 : kZ95 * e.std / std::sqrt(static_cast<double>(v.size()));
        out.push_back(e);
    }
    return out;
}

std::vector<MosEntry> mos_pipeline(const std::vector<RatingRecord>& records, DisplayMode mode, RejectionReport* report) {
    RejectionReport rep = reject_outlier_subjects(records, mode);
    auto mos = compute_mos(zscore_normalize(records, rep.retained, mode), mode);
    if (report) *report = std::move(rep);
    return mos;
}

void write_mos(std::ostream& out, const std::vector<MosEntry>& entries) {
    out << kMosHeader << '\n';
    for (const auto& e : entries) {
        csv::write_row(out, {e.image_id, std::string(mode_name(e.mode)), csv::fmt(e.mos), csv::fmt(e.std),
                             csv::fmt(e.ci_halfwidth), std::to_string(e.n_subjects)});
    }
}

std::vector<MosEntry> read_mos(std::istream& in) {
    const csv::Table t = csv::read_table(in);
    const std::size_t ci = t.column("image_id"), cm = t.column("mode"), cmos = t.column("mos"), cs = t.column("std"),
                      cc = t.column("ci_halfwidth"), cn = t.column("n_subjects");
    std::vector<MosEntry> out;
    for (const auto& row : t.rows) {
        MosEntry e;
        e.image_id = row[ci];
        e.mode = parse_mode(row[cm]);
        try {
            e.mos = std::stod(row[cmos]);
            e.std = std::stod(row[cs]);
            e.ci_halfwidth = std::stod(row[cc]);
            e.n_subjects = static_cast<std::size_t>(std::stoul(row[cn]));
        } catch (const std::logic_error&) {
            throw RatingsError("mos csv: unparseable numeric field for image " + e.image_id);
        }
        e.single_subject = e.n_subjects == 1;
        out.push_back(e);
    }
    return out;
}

std::vector<MosEntry> read_mos_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RatingsError("mos csv: cannot open " + path);
    return read_mos(in);
}

double ranking_score(const RankingTally& tally, const std::map<int, double>& weights) {
    if (tally.n == 0) throw std::invalid_argument("ranking_score: n must be positive for option " + tally.option);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& [rank, f] : tally.frequency) {
        if (f == 0) continue;
        auto it = weights.find(rank);
        if (it == weights.end()) {
            throw std::invalid_argument("ranking_score: no weight for rank " + std::to_string(rank) + " of option " + tally.option);
        }
        total += static_cast<double>(f) * it->second;
        count += f;
    }
    if (count > tally.n) throw std::invalid_argument("ranking_score: frequencies exceed n for option " + tally.option);
    return total / static_cast<double>(tally.n);
}

std::map<int, double> default_rank_weights() { return {{1, 3.0}, {2, 2.0}, {3, 1.0}}; }

std::vector<double> questionnaire_summary(const std::vector<std::vector<double>>& responses) {
    std::vector<double> out;
    for (std::size_t q = 0; q < responses.size(); ++q) {
        if (responses[q].empty()) throw std::invalid_argument("questionnaire: question " + std::to_string(q) + " has no responses");
        out.push_back(mean_of(responses[q]));
    }
    return out;
}

double discriminability(const RatingMatrix& m, const std::vector<std::size_t>& subjects, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("discriminability: alpha must lie in (0,1)");
    const std::size_t ni = m.images.size();
    if (ni < 2) throw std::invalid_argument("discriminability: need at least 2 images");
    std::vector<std::vector<double>> cols(ni);
    for (std::size_t i = 0; i < ni; ++i) {
        for (std::size_t s : subjects) cols[i].push_back(m.at(s, i));
    }
    std::size_t significant = 0, pairs = 0;
    for (std::size_t i = 0; i < ni; ++i) {
        for (std::size_t j = i + 1; j < ni; ++j) {
            ++pairs;
            if (wilcoxon_rank_sum(cols[i], cols[j]).p_value < alpha) ++significant;
        }
    }
    return static_cast<double>(significant) / static_cast<double>(pairs);
}

std::vector<double> zprime_matrix(const RatingMatrix& m) {
    const bool constant_study = all_equal(m.scores);
    const std::size_t ni = m.images.size();
    std::vector<double> out(m.scores.size());
    const auto stats = subject_stats(m);
    for (std::size_t s = 0; s < m.subjects.size(); ++s) {
        if (stats[s].sigma == 0.0 && !constant_study) {
            throw ZeroVarianceError("participant " + m.subjects[s] + " has zero score variance");
        }
        for (std::size_t i = 0; i < ni; ++i) {
            const double z = constant_study ? 0.0 : (m.at(s, i) - stats[s].mu) / stats[s].sigma;
            out[s * ni + i] = rescale_z(z);
        }
    }
    return out;
}

double mean_ci(const std::vector<double>& zprime, std::size_t n_images, const std::vector<std::size_t>& subjects) {
    if (subjects.size() < 2) return 0.0;
    double acc = 0.0;
    std::vector<double> col(subjects.size());
    for (std::size_t i = 0; i < n_images; ++i) {
        for (std::size_t k = 0; k < subjects.size(); ++k) col[k] = zprime[subjects[k] * n_images + i];
        acc += kZ95 * sample_std(col) / std::sqrt(static_cast<double>(col.size()));
    }
    return acc / static_cast<double>(n_images);
}

std::map<std::size_t, double> discriminability_curve(const std::vector<RatingRecord>& records, DisplayMode mode,
                                                     const CurveOptions& options) {
    return discriminability_curve(build_matrix(records, mode), options);
}

std::map<std::size_t, double> discriminability_curve(const RatingMatrix& m, const CurveOptions& options) {
    check_curve_options(options, m.subjects.size());
    std::mt19937_64 rng(options.seed);
    std::map<std::size_t, double> curve;
    for (std::size_t size : options.subset_sizes) {
        double acc = 0.0;
        for (std::size_t t = 0; t < options.trials; ++t) {
            acc += discriminability(m, draw_subset(m.subjects.size(), size, rng), options.alpha);
        }
        curve[size] = acc / static_cast<double>(options.trials);
    }
    return curve;
}

std::map<std::size_t, double> mean_ci_curve(const std::vector<RatingRecord>& records, DisplayMode mode,
                                            const CurveOptions& options) {
    return mean_ci_curve(build_matrix(records, mode), options);
}

std::map<std::size_t, double> mean_ci_curve(const RatingMatrix& m, const CurveOptions& options) {
    check_curve_options(options, m.subjects.size());
    const std::vector<double> zp = zprime_matrix(m);
    std::mt19937_64 rng(options.seed);
    std::map<std::size_t, double> curve;
    for (std::size_t size : options.subset_sizes) {
        double acc = 0.0;
        for (std::size_t t = 0; t < options.trials; ++t) {
            acc += mean_ci(zp, m.images.size(), draw_subset(m.subjects.size(), size, rng));
        }
        curve[size] = acc / static_cast<double>(options.trials);
    }
    return curve;
}

}  // namespace esiqa::stats
