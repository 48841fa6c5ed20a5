#pragma once

// Uniform entry point over the differentiable primitive set, addressed by a
// descriptor. Used by the gradient suite to sweep every primitive and by any
// caller that builds graphs from data rather than code.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa {

enum class Primitive {
    matmul,
    bmm,
    add,
    sub,
    mul,
    scale,
    softmax,
    layer_norm,
    depthwise_conv3x3,
    linear,
    relu,
    silu,
    sigmoid,
    exp,
    softplus,
    mean,
    sum,
    concat,
    reshape,
    transpose,
    dropout,
    conv2d,
};

struct UnknownPrimitiveError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct PrimitiveDescriptor {
    Primitive kind = Primitive::add;
    std::vector<std::size_t> axes;  // softmax/concat: axes[0]; mean/sum: reduced axes; transpose: permutation
    Shape shape;                    // reshape target
    double factor = 1.0;            // scale factor, dropout rate
    std::size_t stride = 1;         // conv2d
    std::size_t padding = 0;        // conv2d
    bool train = false;             // dropout
    std::uint64_t seed = 0;         // dropout mask
};

std::string_view primitive_name(Primitive kind);
/// Throws UnknownPrimitiveError for names outside the primitive set.
Primitive primitive_from_name(std::string_view name);
const std::vector<Primitive>& all_primitives();

/// Optional trailing inputs (bias, gamma/beta) may be omitted.
Tensor primitive_apply(const PrimitiveDescriptor& op, std::span<const Tensor> inputs);

}  // namespace esiqa
