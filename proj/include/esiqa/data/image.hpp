#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa::data {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 8-bit interleaved RGB.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }
};

/// PNG or JPEG, detected from the leading bytes. Gray and alpha inputs are
/// converted to RGB.
Image load_image(const std::string& path);
/// Reads only the header; returns {width, height}.
std::array<std::size_t, 2> image_size(const std::string& path);

void save_png(const std::string& path, const Image& image);
void save_jpeg(const std::string& path, const Image& image, int quality = 95);

/// Bilinear resample to side x side, half-pixel centers, values in [0,1].
/// Output is interleaved RGB, row-major.
std::vector<double> resize_bilinear(const Image& image, std::size_t side);

/// Per-channel constants applied after scaling to [0,1].
inline constexpr std::array<double, 3> kChannelMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kChannelStd{0.229, 0.224, 0.225};

/// Resize and normalize into a [side, side, 3] block of a batch buffer.
std::vector<double> preprocess(const Image& image, std::size_t side);

/// Stacks preprocessed samples into [B, side, side, 3].
Tensor stack_batch(const std::vector<const std::vector<double>*>& samples, std::size_t side);

}  // namespace esiqa::data
