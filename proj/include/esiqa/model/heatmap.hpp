#pragma once

#include <cstddef>
#include <vector>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa::model {

struct Heatmap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;  // row-major, in [0,1]

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Channel mean per spatial position, min-max normalized to [0,1].
/// `features` is [channels, height*width]. A constant map yields all zeros.
Heatmap stage_heatmap(const Tensor& features, std::size_t height, std::size_t width);

/// Convenience for token tensors [T, C] or [1, T, C].
Heatmap token_heatmap(const Tensor& tokens, std::size_t height, std::size_t width);

}  // namespace esiqa::model
