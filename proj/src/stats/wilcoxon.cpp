#include "esiqa/stats/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace esiqa::stats {

namespace {

// Doubled midranks of the pooled sample, so tied ranks stay integral.
std::vector<long> doubled_ranks(const std::vector<double>& pooled) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
    std::vector<long> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const long twice = static_cast<long>(i + j + 2);  // (i+1)+(j+1)
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = twice;
        i = j + 1;
    }
    return ranks;
}

std::vector<double> pool(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wilcoxon: both samples must be nonempty");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    for (double v : pooled) {
        if (!std::isfinite(v)) throw std::invalid_argument("wilcoxon: non-finite observation");
    }
    return pooled;
}

// Two-sided tail of an integer-valued null distribution indexed by doubled rank sum.
double two_sided_tail(const std::vector<double>& counts, long observed, long mean) {
    const long dev = std::abs(observed - mean);
    double tail = 0.0, total = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
        total += counts[s];
        const long sum = static_cast<long>(s);
        if (std::abs(sum - mean) >= dev) tail += counts[s];
    }
    return std::min(1.0, tail / total);
}

}  // namespace

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
    const std::vector<double> pooled = pool(a, b);
    const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
    const std::vector<long> ranks = doubled_ranks(pooled);
    long w2 = 0;
    for (std::size_t i = 0; i < n1; ++i) w2 += ranks[i];

    RankSumResult res;
    res.w = static_cast<double>(w2) / 2.0;
    const long mean2 = static_cast<long>(n1 * (n + 1));  // E[2W]

    if (n1 <= kWilcoxonExactLimit && n2 <= kWilcoxonExactLimit) {
        res.exact = true;
        // dp[k][s] = number of k-subsets whose doubled rank sum is s.
        const long max_sum = std::accumulate(ranks.begin(), ranks.end(), 0L);
        std::vector<std::vector<double>> dp(n1 + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
        dp[0][0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const long r = ranks[i];
            for (std::size_t k = std::min(i + 1, n1); k >= 1; --k) {
                for (long s = max_sum; s >= r; --s) dp[k][s] += dp[k - 1][s - r];
            }
        }
        res.p_value = two_sided_tail(dp[n1], w2, mean2);
        return res;
    }

    // Normal approximation with tie correction.
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        i = j + 1;
    }
    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2), dn = static_cast<double>(n);
    const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
    if (var <= 0.0) {
        res.p_value = 1.0;
        return res;
    }
    const double mean = dn1 * (dn + 1.0) / 2.0;
    const double dev = std::max(0.0, std::abs(res.w - mean) - 0.5);
    const boost::math::normal_distribution<double> normal;
    res.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(normal, dev / std::sqrt(var))));
    return res;
}

double wilcoxon_exact_enumeration(std::span<const double> a, std::span<const double> b) {
    const std::vector<double> pooled = pool(a, b);
    const std::size_t n1 = a.size(), n = pooled.size();
    const std::vector<long> ranks = doubled_ranks(pooled);
    long observed = 0;
    for (std::size_t i = 0; i < n1; ++i) observed += ranks[i];
    const long mean2 = static_cast<long>(n1 * (n + 1));
    const long dev = std::abs(observed - mean2);

    std::vector<int> labels(n, 0);
    std::fill(labels.end() - static_cast<long>(n1), labels.end(), 1);
    double hits = 0.0, total = 0.0;
    do {
        long s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i]) s += ranks[i];
        }
        total += 1.0;
        if (std::abs(s - mean2) >= dev) hits += 1.0;
    } while (std::next_permutation(labels.begin(), labels.end()));
    return hits / total;
}

}  // namespace esiqa::stats
