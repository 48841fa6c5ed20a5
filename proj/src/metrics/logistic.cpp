#include "esiqa/metrics/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "esiqa/metrics/correlation.hpp"

namespace esiqa::metrics {

namespace {

using Vec5 = std::array<double, 5>;
using Mat5 = std::array<std::array<double, 5>, 5>;

// 1/(1+e^t) without overflow.
double inv_one_plus_exp(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

double sse(const Vec5& b, std::span<const double> y, std::span<const double> mos) {
    const LogisticParams p = LogisticParams::from_array(b);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = p(y[i]) - mos[i];
        s += r * r;
    }
    return s;
}

// Solves A x = g by Gaussian elimination with partial pivoting.
bool solve5(Mat5 a, Vec5 g, Vec5& x) {
    for (int c = 0; c < 5; ++c) {
        int piv = c;
        for (int r = c + 1; r < 5; ++r) {
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        }
        if (std::abs(a[piv][c]) < 1e-300) return false;
        std::swap(a[c], a[piv]);
        std::swap(g[c], g[piv]);
        for (int r = c + 1; r < 5; ++r) {
            const double f = a[r][c] / a[c][c];
            for (int k = c; k < 5; ++k) a[r][k] -= f * a[c][k];
            g[r] -= f * g[c];
        }
    }
    for (int c = 4; c >= 0; --c) {
        double s = g[c];
        for (int k = c + 1; k < 5; ++k) s -= a[c][k] * x[k];
        x[c] = s / a[c][c];
    }
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

LogisticFit levenberg_marquardt(Vec5 b, std::span<const double> y, std::span<const double> mos, std::size_t max_iter) {
    const std::size_t n = y.size();
    double cost = sse(b, y, mos);
    double lambda = 1e-3;
    LogisticFit fit;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        Mat5 jtj{};
        Vec5 jtr{};
        for (std::size_t i = 0; i < n; ++i) {
            const double s = inv_one_plus_exp(b[1] * (y[i] - b[2]));
            const double ds = s * (1.0 - s);
            const Vec5 j = {0.5 - s, b[0] * ds * (y[i] - b[2]), -b[0] * ds * b[1], y[i], 1.0};
            const double r = b[0] * (0.5 - s) + b[3] * y[i] + b[4] - mos[i];
            for (int a = 0; a < 5; ++a) {
                jtr[a] += j[a] * r;
                for (int c = 0; c < 5; ++c) jtj[a][c] += j[a] * j[c];
            }
        }
        const double gnorm = std::sqrt(std::inner_product(jtr.begin(), jtr.end(), jtr.begin(), 0.0));
        if (cost == 0.0 || gnorm < 1e-14 * (1.0 + cost)) {
            fit.converged = true;
            break;
        }
        bool improved = false;
        while (lambda < 1e16) {
            Mat5 a = jtj;
            for (int d = 0; d < 5; ++d) a[d][d] += lambda * std::max(jtj[d][d], 1e-12);
            Vec5 neg{}, step{};
            for (int d = 0; d < 5; ++d) neg[d] = -jtr[d];
            if (solve5(a, neg, step)) {
                Vec5 trial = b;
                for (int d = 0; d < 5; ++d) trial[d] += step[d];
                const double trial_cost = sse(trial, y, mos);
                if (std::isfinite(trial_cost) && trial_cost < cost) {
                    const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
                    b = trial;
                    cost = trial_cost;
                    lambda = std::max(lambda / 3.0, 1e-15);
                    improved = true;
                    if (rel < 1e-15 || cost < 1e-28) fit.converged = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if (!improved) {
            fit.converged = true;
            break;
        }
        if (fit.converged) break;
    }
    fit.params = LogisticParams::from_array(b);
    fit.residual = cost;
    fit.iterations = it;
    return fit;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double LogisticParams::operator()(double y) const {
    return beta1 * (0.5 - inv_one_plus_exp(beta2 * (y - beta3))) + beta4 * y + beta5;
}

std::vector<double> apply_logistic(const LogisticParams& p, std::span<const double> y) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = p(y[i]);
    return out;
}

LogisticFit fit_logistic(std::span<const double> y, std::span<const double> mos, const LogisticOptions& options) {
    check_pair(y, mos, 6, "fit_logistic");
    const double n = static_cast<double>(y.size());
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    const double mm = std::accumulate(mos.begin(), mos.end(), 0.0) / n;
    double syy = 0.0, sym = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        syy += (y[i] - my) * (y[i] - my);
        sym += (y[i] - my) * (mos[i] - mm);
    }
    const double slope = syy > 0.0 ? sym / syy : 0.0;
    const double intercept = mm - slope * my;
    const double sd_y = std::sqrt(syy / (n - 1.0));
    const auto [mn, mx] = std::minmax_element(mos.begin(), mos.end());
    const double range = *mx - *mn;
    const double b2 = sd_y > 0.0 ? 1.0 / sd_y : 1.0;
    const double b3 = median_of({y.begin(), y.end()});
    const double sign = slope < 0.0 ? -1.0 : 1.0;

    std::vector<Vec5> starts;
    starts.push_back({0.0, b2, b3, slope, intercept});
    starts.push_back({sign * range, b2, b3, 0.0, mm});
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t k = 0; k < options.jitter_starts; ++k) {
        starts.push_back({sign * range * std::exp(0.5 * gauss(rng)), b2 * std::exp(gauss(rng)), b3 + 0.5 * sd_y * gauss(rng),
                          0.0, mm});
    }

    LogisticFit best;
    best.residual = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        LogisticFit f = levenberg_marquardt(s, y, mos, options.max_iterations);
        if (f.residual < best.residual) best = f;
    }
    return best;
}

PlccResult plcc(std::span<const double> y, std::span<const double> mos, const LogisticOptions& options) {
    PlccResult r;
    r.fit = fit_logistic(y, mos, options);
    const auto mapped = apply_logistic(r.fit.params, y);
    r.plcc = pearson(mapped, mos);
    return r;
}

}  // namespace esiqa::metrics
