#include "esiqa/data/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "esiqa/csv.hpp"

namespace esiqa::data {

ImageFeatures compute_features(const Image& image) {
    const std::size_t w = image.width, h = image.height, n = w * h;
    if (n == 0) throw ImageError("features: empty image");
    std::vector<double> luma(n);
    double sum_rg = 0.0, sum_yb = 0.0, sq_rg = 0.0, sq_yb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = image.rgb[3 * i], g = image.rgb[3 * i + 1], b = image.rgb[3 * i + 2];
        luma[i] = 0.299 * r + 0.587 * g + 0.114 * b;
        const double rg = r - g, yb = 0.5 * (r + g) - b;
        sum_rg += rg;
        sum_yb += yb;
        sq_rg += rg * rg;
        sq_yb += yb * yb;
    }
    const double dn = static_cast<double>(n);
    ImageFeatures f;
    double s = 0.0, ss = 0.0;
    for (double v : luma) s += v;
    f.brightness = s / dn;
    for (double v : luma) ss += (v - f.brightness) * (v - f.brightness);
    f.contrast = std::sqrt(ss / dn);
    const double mu_rg = sum_rg / dn, mu_yb = sum_yb / dn;
    const double var_rg = std::max(0.0, sq_rg / dn - mu_rg * mu_rg), var_yb = std::max(0.0, sq_yb / dn - mu_yb * mu_yb);
    f.colorfulness = std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);

    double grad = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
            const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
            const double gx = xr > xl ? (luma[y * w + xr] - luma[y * w + xl]) / static_cast<double>(xr - xl) : 0.0;
            const double gy = yd > yu ? (luma[yd * w + x] - luma[yu * w + x]) / static_cast<double>(yd - yu) : 0.0;
            grad += std::sqrt(gx * gx + gy * gy);
            ++count;
        }
    }
    f.sharpness = grad / static_cast<double>(count);
    return f;
}

FeatureTable feature_table(std::vector<std::string> ids, std::vector<std::array<double, 4>> raw) {
    if (ids.size() != raw.size()) throw std::invalid_argument("features: ids and rows differ in length");
    if (ids.empty()) throw std::invalid_argument("features: empty dataset");
    FeatureTable t;
    t.image_ids = std::move(ids);
    t.raw = std::move(raw);
    t.normalized = t.raw;
    t.degenerate = t.raw.size() < 2;
    if (t.degenerate) return t;
    for (std::size_t c = 0; c < 4; ++c) {
        double lo = t.raw[0][c], hi = t.raw[0][c];
        for (const auto& r : t.raw) {
            lo = std::min(lo, r[c]);
            hi = std::max(hi, r[c]);
        }
        for (auto& r : t.normalized) r[c] = hi > lo ? (r[c] - lo) / (hi - lo) : 0.0;
    }
    return t;
}

FeatureTable low_level_features(const Manifest& manifest) {
    std::vector<std::string> ids;
    std::vector<std::array<double, 4>> raw;
    for (const auto& e : manifest.entries) {
        ids.push_back(e.image_id);
        raw.push_back(compute_features(load_image(e.left_path)).as_array());
    }
    return feature_table(std::move(ids), std::move(raw));
}

Density gaussian_kde(const std::vector<double>& values, double lo, double hi, std::size_t points) {
    if (values.empty()) throw std::invalid_argument("kde: no values");
    if (points < 2 || !(hi > lo)) throw std::invalid_argument("kde: invalid grid");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    Density d;
    d.bandwidth = sd > 0.0 ? 1.06 * sd * std::pow(n, -0.2) : 0.05 * (hi - lo);
    const double norm = 1.0 / (n * d.bandwidth * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        double acc = 0.0;
        for (double v : values) {
            const double u = (x - v) / d.bandwidth;
            acc += std::exp(-0.5 * u * u);
        }
        d.x.push_back(x);
        d.y.push_back(acc * norm);
    }
    return d;
}

void write_feature_csv(std::ostream& out, const FeatureTable& t) {
    csv::Row header{"image_id"};
    for (const char* name : kFeatureNames) header.emplace_back(name);
    for (const char* name : kFeatureNames) header.push_back(std::string(name) + "_norm");
    header.emplace_back("degenerate");
    csv::write_row(out, header);
    for (std::size_t i = 0; i < t.image_ids.size(); ++i) {
        csv::Row row{t.image_ids[i]};
        for (double v : t.raw[i]) row.push_back(csv::fmt(v));
        for (double v : t.normalized[i]) row.push_back(csv::fmt(v));
        row.emplace_back(t.degenerate ? "1" : "0");
        csv::write_row(out, row);
    }
}

void write_density_csv(std::ostream& out, const FeatureTable& t) {
    csv::write_row(out, {"feature", "x", "density"});
    for (std::size_t c = 0; c < 4; ++c) {
        std::vector<double> column;
        for (const auto& r : t.normalized) column.push_back(r[c]);
        const auto [mn, mx] = std::minmax_element(column.begin(), column.end());
        const Density d = gaussian_kde(column, std::min(0.0, *mn), std::max(1.0, *mx));
        for (std::size_t i = 0; i < d.x.size(); ++i) csv::write_row(out, {kFeatureNames[c], csv::fmt(d.x[i]), csv::fmt(d.y[i])});
    }
}

}  // namespace esiqa::data
