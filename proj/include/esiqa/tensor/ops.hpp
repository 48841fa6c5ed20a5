#pragma once

// Differentiable primitives. Every function records a graph node when any
// input requires gradient and grad mode is enabled.
//
// Image-like tensors are channels-last: [batch, height, width, channels].
// Token tensors are [batch, tokens, channels] with tokens in row-major grid
// order, so a token tensor reshapes to an image tensor without copying
// semantics changing.

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa::ops {

// Elementwise with numpy-style broadcasting (right-aligned, extent 1 expands).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [..., m,k] x [..., k,n] -> [..., m,n]; leading extents must match.
Tensor bmm(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last axis; gamma/beta (extent = last axis) optional.
Tensor layer_norm(const Tensor& x, const std::optional<Tensor>& gamma = std::nullopt,
                  const std::optional<Tensor>& beta = std::nullopt);

/// x [B,H,W,C], weight [3,3,C], bias [C]; stride 1, zero padding 1.
Tensor depthwise_conv3x3(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias);

/// x [B,H,W,Cin], weight [Cout,K,K,Cin], bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              std::size_t stride, std::size_t padding);

/// x [..., in], weight [in,out], bias [out] -> [..., out]
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias);

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor softplus(const Tensor& x);

/// Reduces the listed axes (removed from the result). Empty axes reduces
/// everything to shape [1].
Tensor mean(const Tensor& x, std::vector<std::size_t> axes = {});
Tensor sum(const Tensor& x, std::vector<std::size_t> axes = {});

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
/// Axis permutation: result axis i is input axis perm[i].
Tensor transpose(const Tensor& x, std::vector<std::size_t> perm);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);

/// Inverted dropout. Identity when !train or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool train, std::mt19937_64& rng);

/// mean((pred - target)^2) as shape [1].
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace esiqa::ops
