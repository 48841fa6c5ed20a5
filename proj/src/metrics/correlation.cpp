#include "esiqa/metrics/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace esiqa::metrics {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len, const char* who) {
    if (x.size() != y.size()) {
        throw std::invalid_argument(std::string(who) + ": length mismatch " + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()));
    }
    if (x.size() < min_len) {
        throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_len) + " samples, got " +
                                    std::to_string(x.size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument(std::string(who) + ": non-finite entry");
    }
}

std::vector<double> midranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = rank;
        i = j + 1;
    }
    return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, 2, "pearson");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ConstantVectorError("correlation undefined for a constant vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double srcc(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, 3, "srcc");
    const auto rx = midranks(x), ry = midranks(y);
    return pearson(rx, ry);
}

namespace {

// Counts inversions of v while merge-sorting it.
long long merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = (lo + hi) / 2;
    long long inv = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            inv += static_cast<long long>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi), v.begin() + static_cast<long>(lo));
    return inv;
}

// Σ t(t−1)/2 over runs of equal values in a sorted sequence.
template <class Eq>
long long tied_pairs(std::size_t n, Eq eq) {
    long long total = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && eq(j + 1, i)) ++j;
        const long long t = static_cast<long long>(j - i + 1);
        total += t * (t - 1) / 2;
        i = j + 1;
    }
    return total;
}

}  // namespace

double krcc(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, 3, "krcc");
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });
    const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
    const long long n1 = tied_pairs(n, [&](std::size_t a, std::size_t b) { return x[order[a]] == x[order[b]]; });
    const long long n3 = tied_pairs(n, [&](std::size_t a, std::size_t b) {
        return x[order[a]] == x[order[b]] && y[order[a]] == y[order[b]];
    });
    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    const long long swaps = merge_count(ys, buf, 0, n);
    const long long n2 = tied_pairs(n, [&](std::size_t a, std::size_t b) { return ys[a] == ys[b]; });
    if (n1 == n0 || n2 == n0) throw ConstantVectorError("krcc: correlation undefined for a constant vector");
    // Pairs untied in both coordinates: concordant − discordant.
    const long long s = n0 - n1 - n2 + n3 - 2 * swaps;
    return std::clamp(static_cast<double>(s) / std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2)), -1.0, 1.0);
}

}  // namespace esiqa::metrics
