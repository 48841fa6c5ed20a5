#include "esiqa/metrics/roc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "esiqa/metrics/correlation.hpp"

namespace esiqa::metrics {

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_var(std::span<const double> v, double mu) {
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return ss / static_cast<double>(v.size() - 1);
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

PairTest welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test: need at least 2 observations per sample");
    const double ma = mean_of(a), mb = mean_of(b);
    const double va = sample_var(a, ma) / static_cast<double>(a.size());
    const double vb = sample_var(b, mb) / static_cast<double>(b.size());
    PairTest r;
    if (va + vb == 0.0) {
        r.p_value = ma == mb ? 1.0 : 0.0;
        r.t = ma == mb ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
        return r;
    }
    r.t = (ma - mb) / std::sqrt(va + vb);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    const boost::math::students_t_distribution<double> dist(r.df);
    r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
    return r;
}

std::vector<ImagePair> significant_pairs(const std::vector<std::vector<double>>& scores, double alpha) {
    if (scores.size() < 2) throw std::invalid_argument("significant_pairs: need at least 2 images");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("significant_pairs: alpha must lie in (0,1)");
    for (const auto& s : scores) {
        if (s.size() < 2) throw std::invalid_argument("significant_pairs: need at least 2 subjects per image");
    }
    std::vector<ImagePair> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = i + 1; j < scores.size(); ++j) {
            ImagePair p;
            p.first = i;
            p.second = j;
            p.mos_difference = mean_of(scores[i]) - mean_of(scores[j]);
            auto si = scores[i], sj = scores[j];
            std::sort(si.begin(), si.end());
            std::sort(sj.begin(), sj.end());
            if (si == sj) {
                p.p_value = 1.0;
            } else {
                p.p_value = welch_t_test(scores[i], scores[j]).p_value;
            }
            if (p.p_value < alpha && p.mos_difference != 0.0) {
                p.label = p.mos_difference > 0.0 ? PairLabel::better : PairLabel::worse;
            }
            out.push_back(p);
        }
    }
    return out;
}

const char* roc_kind_name(RocKind kind) {
    return kind == RocKind::different_vs_similar ? "different_vs_similar" : "better_vs_worse";
}

double auc_mann_whitney(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
    std::size_t pos = 0;
    for (int l : labels) pos += l ? 1 : 0;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw SingleClassError("auc: both classes must be present");
    const auto ranks = midranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) rank_sum += ranks[i];
    }
    const double dp = static_cast<double>(pos), dn = static_cast<double>(neg);
    return (rank_sum - dp * (dp + 1.0) / 2.0) / (dp * dn);
}

RocResult roc_different_vs_similar(const std::vector<ImagePair>& pairs, std::span<const double> objective) {
    RocResult r;
    r.kind = RocKind::different_vs_similar;
    for (const auto& p : pairs) {
        if (p.first >= objective.size() || p.second >= objective.size()) throw std::out_of_range("roc: pair index out of range");
        r.pairs.emplace_back(p.first, p.second);
        r.labels.push_back(p.label != PairLabel::similar ? 1 : 0);
        r.scores.push_back(std::abs(objective[p.first] - objective[p.second]));
    }
    r.auc = auc_mann_whitney(r.scores, r.labels);
    return r;
}

RocResult roc_better_vs_worse(const std::vector<ImagePair>& pairs, std::span<const double> objective) {
    RocResult r;
    r.kind = RocKind::better_vs_worse;
    for (const auto& p : pairs) {
        if (p.label == PairLabel::similar) continue;
        if (p.first >= objective.size() || p.second >= objective.size()) throw std::out_of_range("roc: pair index out of range");
        r.pairs.emplace_back(p.first, p.second);
        r.labels.push_back(p.label == PairLabel::better ? 1 : 0);
        r.scores.push_back(objective[p.first] - objective[p.second]);
    }
    r.auc = auc_mann_whitney(r.scores, r.labels);
    return r;
}

const char* comparison_name(Comparison c) {
    switch (c) {
        case Comparison::better: return "better";
        case Comparison::worse: return "worse";
        default: return "indistinguishable";
    }
}

SignificanceMatrix auc_significance_matrix(const std::vector<std::string>& methods, const std::vector<RocResult>& results,
                                           std::size_t resamples, double alpha, std::uint64_t seed) {
    if (methods.size() != results.size()) throw std::invalid_argument("significance: one method name per result required");
    if (results.empty()) throw std::invalid_argument("significance: no results");
    if (resamples == 0) throw std::invalid_argument("significance: resamples must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("significance: alpha must lie in (0,1)");
    const RocResult& ref = results.front();
    for (const auto& r : results) {
        if (r.kind != ref.kind || r.labels != ref.labels || r.pairs != ref.pairs || r.scores.size() != ref.labels.size()) {
            throw std::invalid_argument("significance: methods were not evaluated on the identical pair set");
        }
    }
    const std::size_t m = results.size(), n = ref.labels.size();

    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> aucs(m);
    std::vector<std::size_t> idx(n);
    std::vector<double> s(n);
    std::vector<int> l(n);
    std::size_t drawn = 0, attempts = 0;
    while (drawn < resamples) {
        if (++attempts > 100 * resamples) throw SingleClassError("significance: bootstrap keeps drawing a single class");
        for (auto& i : idx) i = static_cast<std::size_t>(rng() % n);
        bool has_pos = false, has_neg = false;
        for (std::size_t k = 0; k < n; ++k) {
            l[k] = ref.labels[idx[k]];
            (l[k] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t k = 0; k < n; ++k) s[k] = results[a].scores[idx[k]];
            aucs[a].push_back(auc_mann_whitney(s, l));
        }
        ++drawn;
    }

    SignificanceMatrix out;
    out.methods = methods;
    out.cells.assign(m, std::vector<Comparison>(m, Comparison::indistinguishable));
    std::vector<double> diff(resamples);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = a + 1; b < m; ++b) {
            for (std::size_t k = 0; k < resamples; ++k) diff[k] = aucs[a][k] - aucs[b][k];
            const double lo = quantile(diff, alpha / 2.0), hi = quantile(diff, 1.0 - alpha / 2.0);
            if (lo > 0.0) {
                out.cells[a][b] = Comparison::better;
                out.cells[b][a] = Comparison::worse;
            } else if (hi < 0.0) {
                out.cells[a][b] = Comparison::worse;
                out.cells[b][a] = Comparison::better;
            }
        }
    }
    return out;
}

std::string format_significance_matrix(const SignificanceMatrix& m) {
    std::size_t width = 6;
    for (const auto& name : m.methods) width = std::max(width, name.size());
    std::ostringstream os;
    auto pad = [&](const std::string& s) {
        os << s << std::string(width + 2 - std::min(width + 1, s.size()), ' ');
    };
    pad("");
    for (const auto& name : m.methods) pad(name);
    os << '\n';
    for (std::size_t i = 0; i < m.methods.size(); ++i) {
        pad(m.methods[i]);
        for (std::size_t j = 0; j < m.methods.size(); ++j) {
            const Comparison c = m.cells[i][j];
            pad(c == Comparison::better ? "1" : c == Comparison::worse ? "-1" : "0");
        }
        os << '\n';
    }
    os << "1: row better than column, -1: row worse than column, 0: indistinguishable\n";
    return os.str();
}

}  // namespace esiqa::metrics
