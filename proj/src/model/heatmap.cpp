#include "esiqa/model/heatmap.hpp"

#include <algorithm>

#include "esiqa/tensor/ops.hpp"

namespace esiqa::model {

Heatmap stage_heatmap(const Tensor& features, std::size_t height, std::size_t width) {
    if (features.dim() != 2 || features.size(1) != height * width) {
        throw ShapeError("heatmap: features " + shape_str(features.shape()) + " do not match a " + std::to_string(height) +
                         "x" + std::to_string(width) + " grid");
    }
    const std::size_t channels = features.size(0), positions = features.size(1);
    const auto v = features.data();
    Heatmap map{height, width, std::vector<double>(positions, 0.0)};
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < positions; ++p) map.values[p] += v[c * positions + p];
    }
    for (double& x : map.values) x /= static_cast<double>(channels);
    const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
    const double low = *lo, range = *hi - *lo;
    for (double& x : map.values) x = range > 0.0 ? (x - low) / range : 0.0;
    return map;
}

Heatmap token_heatmap(const Tensor& tokens, std::size_t height, std::size_t width) {
    Tensor t = tokens.detach();
    if (t.dim() == 3) {
        if (t.size(0) != 1) throw ShapeError("heatmap: expected a single sample, got " + shape_str(t.shape()));
        t = ops::reshape(t, {t.size(1), t.size(2)});
    }
    return stage_heatmap(ops::transpose_last2(t), height, width);
}

}  // namespace esiqa::model
