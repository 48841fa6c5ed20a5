#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "esiqa/data/image.hpp"
#include "esiqa/data/manifest.hpp"

namespace esiqa::data {

inline constexpr std::array<const char*, 4> kFeatureNames{"brightness", "contrast", "colorfulness", "sharpness"};

/// Raw statistics on the 0..255 scale.
struct ImageFeatures {
    double brightness = 0.0;    // mean luma, 0.299 R + 0.587 G + 0.114 B
    double contrast = 0.0;      // population std of luma
    double colorfulness = 0.0;  // √(σ²_rg+σ²_yb) + 0.3·√(μ²_rg+μ²_yb)
    double sharpness = 0.0;     // mean central-difference gradient magnitude of luma

    std::array<double, 4> as_array() const { return {brightness, contrast, colorfulness, sharpness}; }
};

ImageFeatures compute_features(const Image& image);

struct FeatureTable {
    std::vector<std::string> image_ids;
    std::vector<std::array<double, 4>> raw;
    std::vector<std::array<double, 4>> normalized;  // min-max per column
    bool degenerate = false;  // fewer than 2 images: normalized = raw
};

/// Left views of every manifest entry.
FeatureTable low_level_features(const Manifest& manifest);
FeatureTable feature_table(std::vector<std::string> ids, std::vector<std::array<double, 4>> raw);

/// Gaussian kernel density on an even grid over [lo, hi], Silverman bandwidth.
struct Density {
    std::vector<double> x;
    std::vector<double> y;
    double bandwidth = 0.0;
};
Density gaussian_kde(const std::vector<double>& values, double lo = 0.0, double hi = 1.0, std::size_t points = 101);

/// image_id,brightness,contrast,colorfulness,sharpness,<same>_norm
void write_feature_csv(std::ostream& out, const FeatureTable& table);
/// feature,x,density
void write_density_csv(std::ostream& out, const FeatureTable& table);

}  // namespace esiqa::data
