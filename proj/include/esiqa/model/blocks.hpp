#pragma once

// Backbone and fusion blocks. All token tensors are [batch, tokens, channels]
// with tokens in row-major order over an h x w grid.

#include <cstddef>

#include "esiqa/model/layers.hpp"
#include "esiqa/tensor/tensor.hpp"

namespace esiqa::model {

struct AttentionResult {
    Tensor output;   // [B,Tq,C]
    Tensor weights;  // [B,heads,Tq,Tk], rows sum to 1
};

/// Scaled dot-product attention over `heads` equal channel groups, 1/sqrt(d_k) scaling.
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

/// Non-causal SSD layer: learned projections around `nc_ssd_mix`, with the
/// value path passed through a depthwise 3x3 convolution and SiLU, and the
/// output gated by SiLU(z).
class NcSsd {
public:
    NcSsd(ParamBuilder pb, std::size_t channels, std::size_t heads, std::size_t state, std::size_t expand);

    Tensor operator()(const Tensor& x, std::size_t h, std::size_t w) const;

    std::size_t heads() const { return heads_; }
    std::size_t inner() const { return inner_; }

    Linear x_proj, z_proj, b_proj, c_proj, dt_proj, out_proj;
    DepthwiseConv conv;
    Tensor a_log;  // [heads]

private:
    std::size_t heads_;
    std::size_t state_;
    std::size_t inner_;
};

/// x + LPU(x); x + NcSsd(LN(x)); x + LPU(x); x + FFN(LN(x)).
class VssdBlock {
public:
    VssdBlock(ParamBuilder pb, std::size_t channels, std::size_t heads, std::size_t state, std::size_t expand,
              std::size_t ffn_ratio);

    Tensor operator()(const Tensor& x, std::size_t h, std::size_t w) const;

    DepthwiseConv lpu1;
    LayerNorm norm1;
    NcSsd ssd;
    DepthwiseConv lpu2;
    LayerNorm norm2;
    FeedForward ffn;
};

/// Pre-norm transformer block: x + MSA(LN(x)); x + FFN(LN(x)).
class MsaBlock {
public:
    MsaBlock(ParamBuilder pb, std::size_t channels, std::size_t heads, std::size_t ffn_ratio);

    Tensor operator()(const Tensor& x) const;

    LayerNorm norm1;
    Linear q, k, v, proj;
    LayerNorm norm2;
    FeedForward ffn;
    std::size_t heads;
};

/// Left view queries, right view supplies keys and values; residual into the left view.
class CrossAttention {
public:
    CrossAttention(ParamBuilder pb, std::size_t channels, std::size_t heads, bool symmetric = false);

    Tensor operator()(const Tensor& left, const Tensor& right) const;
    AttentionResult attend(const Tensor& queries_from, const Tensor& keys_from) const;

    Linear q, k, v, proj;
    std::size_t heads;
    bool symmetric;
};

/// Channel-by-channel self attention: the map is [C/heads x C/heads] per head,
/// contracted over tokens and scaled by 1/sqrt(tokens); residual output.
class TransposedAttention {
public:
    TransposedAttention(ParamBuilder pb, std::size_t channels, std::size_t heads);

    Tensor operator()(const Tensor& f) const;
    /// [B,heads,d,d] attention map for `f`.
    Tensor attention_map(const Tensor& f) const;

    Linear q, k, v, proj;
    std::size_t heads;

private:
    Tensor channel_major(const Tensor& x) const;  // [B,T,C] -> [B,heads,d,T]
};

}  // namespace esiqa::model
