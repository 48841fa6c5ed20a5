#include "esiqa/tensor/primitive.hpp"

#include <array>
#include <random>
#include <string>
#include <utility>

#include "esiqa/tensor/ops.hpp"

namespace esiqa {

namespace {

constexpr std::array<std::pair<Primitive, std::string_view>, 22> kNames{{
    {Primitive::matmul, "matmul"},
    {Primitive::bmm, "bmm"},
    {Primitive::add, "add"},
    {Primitive::sub, "sub"},
    {Primitive::mul, "mul"},
    {Primitive::scale, "scale"},
    {Primitive::softmax, "softmax"},
    {Primitive::layer_norm, "layer_norm"},
    {Primitive::depthwise_conv3x3, "depthwise_conv3x3"},
    {Primitive::linear, "linear"},
    {Primitive::relu, "relu"},
    {Primitive::silu, "silu"},
    {Primitive::sigmoid, "sigmoid"},
    {Primitive::exp, "exp"},
    {Primitive::softplus, "softplus"},
    {Primitive::mean, "mean"},
    {Primitive::sum, "sum"},
    {Primitive::concat, "concat"},
    {Primitive::reshape, "reshape"},
    {Primitive::transpose, "transpose"},
    {Primitive::dropout, "dropout"},
    {Primitive::conv2d, "conv2d"},
}};

void require_inputs(const PrimitiveDescriptor& op, std::span<const Tensor> inputs, std::size_t lo, std::size_t hi) {
    if (inputs.size() < lo || inputs.size() > hi) {
        throw ShapeError(std::string(primitive_name(op.kind)) + ": expected " + std::to_string(lo) +
                         (lo == hi ? "" : ".." + std::to_string(hi)) + " inputs, got " + std::to_string(inputs.size()));
    }
}

std::optional<Tensor> optional_input(std::span<const Tensor> inputs, std::size_t i) {
    if (i < inputs.size()) return inputs[i];
    return std::nullopt;
}

std::size_t first_axis(const PrimitiveDescriptor& op) {
    if (op.axes.empty()) throw ShapeError(std::string(primitive_name(op.kind)) + ": axis required");
    return op.axes.front();
}

}  // namespace

std::string_view primitive_name(Primitive kind) {
    for (const auto& [k, name] : kNames) {
        if (k == kind) return name;
    }
    throw UnknownPrimitiveError("primitive: unknown descriptor " + std::to_string(static_cast<int>(kind)));
}

Primitive primitive_from_name(std::string_view name) {
    for (const auto& [k, n] : kNames) {
        if (n == name) return k;
    }
    throw UnknownPrimitiveError("primitive: unknown descriptor '" + std::string(name) + "'");
}

const std::vector<Primitive>& all_primitives() {
    static const std::vector<Primitive> all = [] {
        std::vector<Primitive> v;
        for (const auto& entry : kNames) v.push_back(entry.first);
        return v;
    }();
    return all;
}

Tensor primitive_apply(const PrimitiveDescriptor& op, std::span<const Tensor> in) {
    switch (op.kind) {
        case Primitive::matmul: require_inputs(op, in, 2, 2); return ops::matmul(in[0], in[1]);
        case Primitive::bmm: require_inputs(op, in, 2, 2); return ops::bmm(in[0], in[1]);
        case Primitive::add: require_inputs(op, in, 2, 2); return ops::add(in[0], in[1]);
        case Primitive::sub: require_inputs(op, in, 2, 2); return ops::sub(in[0], in[1]);
        case Primitive::mul: require_inputs(op, in, 2, 2); return ops::mul(in[0], in[1]);
        case Primitive::scale: require_inputs(op, in, 1, 1); return ops::scale(in[0], op.factor);
        case Primitive::softmax: require_inputs(op, in, 1, 1); return ops::softmax(in[0], first_axis(op));
        case Primitive::layer_norm:
            require_inputs(op, in, 1, 3);
            return ops::layer_norm(in[0], optional_input(in, 1), optional_input(in, 2));
        case Primitive::depthwise_conv3x3:
            require_inputs(op, in, 2, 3);
            return ops::depthwise_conv3x3(in[0], in[1], optional_input(in, 2));
        case Primitive::linear: require_inputs(op, in, 2, 3); return ops::linear(in[0], in[1], optional_input(in, 2));
        case Primitive::relu: require_inputs(op, in, 1, 1); return ops::relu(in[0]);
        case Primitive::silu: require_inputs(op, in, 1, 1); return ops::silu(in[0]);
        case Primitive::sigmoid: require_inputs(op, in, 1, 1); return ops::sigmoid(in[0]);
        case Primitive::exp: require_inputs(op, in, 1, 1); return ops::exp(in[0]);
        case Primitive::softplus: require_inputs(op, in, 1, 1); return ops::softplus(in[0]);
        case Primitive::mean: require_inputs(op, in, 1, 1); return ops::mean(in[0], op.axes);
        case Primitive::sum: require_inputs(op, in, 1, 1); return ops::sum(in[0], op.axes);
        case Primitive::concat: require_inputs(op, in, 1, 64); return ops::concat(in, first_axis(op));
        case Primitive::reshape: require_inputs(op, in, 1, 1); return ops::reshape(in[0], op.shape);
        case Primitive::transpose: require_inputs(op, in, 1, 1); return ops::transpose(in[0], op.axes);
        case Primitive::dropout: {
            require_inputs(op, in, 1, 1);
            std::mt19937_64 rng(op.seed);
            return ops::dropout(in[0], op.factor, op.train, rng);
        }
        case Primitive::conv2d:
            require_inputs(op, in, 2, 3);
            return ops::conv2d(in[0], in[1], optional_input(in, 2), op.stride, op.padding);
    }
    throw UnknownPrimitiveError("primitive: unknown descriptor " + std::to_string(static_cast<int>(op.kind)));
}

}  // namespace esiqa
