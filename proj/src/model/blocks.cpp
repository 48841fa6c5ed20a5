#include "esiqa/model/blocks.hpp"

#include <cmath>
#include <random>
#include <string>

#include "esiqa/model/ssd.hpp"
#include "esiqa/tensor/ops.hpp"

namespace esiqa::model {

namespace {

// [B,T,C] -> [B,heads,T,d]
Tensor split_heads(const Tensor& x, std::size_t heads) {
    const std::size_t nb = x.size(0), nt = x.size(1), c = x.size(2);
    return ops::transpose(ops::reshape(x, {nb, nt, heads, c / heads}), {0, 2, 1, 3});
}

// [B,heads,T,d] -> [B,T,C]
Tensor merge_heads(const Tensor& x) {
    const std::size_t nb = x.size(0), heads = x.size(1), nt = x.size(2), d = x.size(3);
    return ops::reshape(ops::transpose(x, {0, 2, 1, 3}), {nb, nt, heads * d});
}

void require_divisible(const char* what, std::size_t channels, std::size_t heads) {
    if (heads == 0 || channels % heads != 0) {
        throw ShapeError(std::string(what) + ": channels " + std::to_string(channels) + " not divisible by heads " +
                         std::to_string(heads));
    }
}

}  // namespace

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
    if (q.dim() != 3 || k.dim() != 3 || k.shape() != v.shape() || q.size(0) != k.size(0) || q.size(2) != k.size(2)) {
        throw ShapeError("attention: incompatible extents " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    }
    require_divisible("attention", q.size(2), heads);
    const double dk = static_cast<double>(q.size(2) / heads);
    const Tensor qh = split_heads(q, heads);
    const Tensor kh = split_heads(k, heads);
    const Tensor vh = split_heads(v, heads);
    const Tensor scores = ops::scale(ops::bmm(qh, ops::transpose_last2(kh)), 1.0 / std::sqrt(dk));
    const Tensor weights = ops::softmax(scores, 3);
    return {merge_heads(ops::bmm(weights, vh)), weights};
}

NcSsd::NcSsd(ParamBuilder pb, std::size_t channels, std::size_t heads, std::size_t state, std::size_t expand)
    : x_proj(Linear::make(pb.scoped("x_proj"), channels, channels * expand)),
      z_proj(Linear::make(pb.scoped("z_proj"), channels, channels * expand)),
      b_proj(Linear::make(pb.scoped("b_proj"), channels, heads * state)),
      c_proj(Linear::make(pb.scoped("c_proj"), channels, heads * state)),
      dt_proj(Linear::make(pb.scoped("dt_proj"), channels, heads)),
      out_proj(Linear::make(pb.scoped("out_proj"), channels * expand, channels)),
      conv(DepthwiseConv::make(pb.scoped("conv"), channels * expand)),
      a_log(pb.constant("a_log", {heads}, 0.0)),
      heads_(heads),
      state_(state),
      inner_(channels * expand) {
    require_divisible("nc_ssd", inner_, heads);
    // Step sizes log-uniform in [1e-3, 1e-1] and decay rates in [1, 16],
    // stored through their inverse activations.
    std::mt19937_64 rng(0x55D0ULL + heads * 131 + channels);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto dt_bias = dt_proj.bias->mutable_data();
    for (double& b : dt_bias) {
        const double dt = std::exp(std::log(1e-3) + unit(rng) * (std::log(1e-1) - std::log(1e-3)));
        b = dt + std::log(-std::expm1(-dt));  // softplus^-1(dt)
    }
    auto a = a_log.mutable_data();
    for (std::size_t i = 0; i < heads; ++i) a[i] = std::log(1.0 + 15.0 * (heads == 1 ? 0.0 : double(i) / double(heads - 1)));
}

Tensor NcSsd::operator()(const Tensor& x, std::size_t h, std::size_t w) const {
    if (x.dim() != 3) throw ShapeError("nc_ssd: expected [B,T,C], got " + shape_str(x.shape()));
    if (x.size(1) != h * w) {
        throw ShapeError("nc_ssd: token count " + std::to_string(x.size(1)) + " is not a " + std::to_string(h) + "x" +
                         std::to_string(w) + " grid");
    }
    const std::size_t nb = x.size(0), nt = x.size(1);
    const std::size_t head_dim = inner_ / heads_;
    const Tensor value = ops::reshape(ops::silu(conv(x_proj(x), h, w)), {nb, nt, heads_, head_dim});
    const Tensor delta = ops::softplus(dt_proj(x));                                        // [B,T,H]
    const Tensor gate = ops::exp(ops::scale(ops::mul(delta, ops::exp(a_log)), -1.0));      // [B,T,H]
    const Tensor bm = ops::reshape(b_proj(x), {nb, nt, heads_, state_});
    const Tensor cm = ops::reshape(c_proj(x), {nb, nt, heads_, state_});
    const Tensor mixed = ops::reshape(nc_ssd_mix(value, gate, delta, bm, cm), {nb, nt, inner_});
    return out_proj(ops::mul(mixed, ops::silu(z_proj(x))));
}

VssdBlock::VssdBlock(ParamBuilder pb, std::size_t channels, std::size_t heads, std::size_t state, std::size_t expand,
                     std::size_t ffn_ratio)
    : lpu1(DepthwiseConv::make(pb.scoped("lpu1"), channels)),
      norm1(LayerNorm::make(pb.scoped("norm1"), channels)),
      ssd(pb.scoped("ssd"), channels, heads, state, expand),
      lpu2(DepthwiseConv::make(pb.scoped("lpu2"), channels)),
      norm2(LayerNorm::make(pb.scoped("norm2"), channels)),
      ffn(FeedForward::make(pb.scoped("ffn"), channels, ffn_ratio)) {}

Tensor VssdBlock::operator()(const Tensor& x, std::size_t h, std::size_t w) const {
    Tensor out = ops::add(x, lpu1(x, h, w));
    out = ops::add(out, ssd(norm1(out), h, w));
    out = ops::add(out, lpu2(out, h, w));
    return ops::add(out, ffn(norm2(out)));
}

MsaBlock::MsaBlock(ParamBuilder pb, std::size_t channels, std::size_t heads_, std::size_t ffn_ratio)
    : norm1(LayerNorm::make(pb.scoped("norm1"), channels)),
      q(Linear::make(pb.scoped("q"), channels, channels)),
      k(Linear::make(pb.scoped("k"), channels, channels)),
      v(Linear::make(pb.scoped("v"), channels, channels)),
      proj(Linear::make(pb.scoped("proj"), channels, channels)),
      norm2(LayerNorm::make(pb.scoped("norm2"), channels)),
      ffn(FeedForward::make(pb.scoped("ffn"), channels, ffn_ratio)),
      heads(heads_) {
    require_divisible("msa", channels, heads_);
}

Tensor MsaBlock::operator()(const Tensor& x) const {
    const Tensor n = norm1(x);
    Tensor out = ops::add(x, proj(multi_head_attention(q(n), k(n), v(n), heads).output));
    return ops::add(out, ffn(norm2(out)));
}

CrossAttention::CrossAttention(ParamBuilder pb, std::size_t channels, std::size_t heads_, bool symmetric_)
    : q(Linear::make(pb.scoped("q"), channels, channels)),
      k(Linear::make(pb.scoped("k"), channels, channels)),
      v(Linear::make(pb.scoped("v"), channels, channels)),
      proj(Linear::make(pb.scoped("proj"), channels, channels)),
      heads(heads_),
      symmetric(symmetric_) {
    require_divisible("cross_attention", channels, heads_);
}

AttentionResult CrossAttention::attend(const Tensor& queries_from, const Tensor& keys_from) const {
    return multi_head_attention(q(queries_from), k(keys_from), v(keys_from), heads);
}

Tensor CrossAttention::operator()(const Tensor& left, const Tensor& right) const {
    if (left.shape() != right.shape()) {
        throw ShapeError("cross_attention: view extents differ " + shape_str(left.shape()) + " vs " +
                         shape_str(right.shape()));
    }
    Tensor fused = proj(attend(left, right).output);
    if (symmetric) fused = ops::scale(ops::add(fused, proj(attend(right, left).output)), 0.5);
    return ops::add(fused, left);
}

TransposedAttention::TransposedAttention(ParamBuilder pb, std::size_t channels, std::size_t heads_)
    : q(Linear::make(pb.scoped("q"), channels, channels)),
      k(Linear::make(pb.scoped("k"), channels, channels)),
      v(Linear::make(pb.scoped("v"), channels, channels)),
      proj(Linear::make(pb.scoped("proj"), channels, channels)),
      heads(heads_) {
    require_divisible("transposed_attention", channels, heads_);
}

Tensor TransposedAttention::channel_major(const Tensor& x) const {
    const std::size_t nb = x.size(0), nt = x.size(1), c = x.size(2);
    return ops::transpose(ops::reshape(x, {nb, nt, heads, c / heads}), {0, 2, 3, 1});
}

Tensor TransposedAttention::attention_map(const Tensor& f) const {
    if (f.dim() != 3) throw ShapeError("transposed_attention: expected [B,T,C], got " + shape_str(f.shape()));
    const double tokens = static_cast<double>(f.size(1));
    const Tensor qc = channel_major(q(f));                       // [B,h,d,T]
    const Tensor kc = channel_major(k(f));                       // [B,h,d,T]
    const Tensor scores = ops::bmm(qc, ops::transpose_last2(kc)); // [B,h,d,d]
    return ops::softmax(ops::scale(scores, 1.0 / std::sqrt(tokens)), 3);
}

Tensor TransposedAttention::operator()(const Tensor& f) const {
    const Tensor attn = attention_map(f);
    const Tensor mixed = ops::bmm(attn, channel_major(v(f)));  // [B,h,d,T]
    const std::size_t nb = f.size(0), nt = f.size(1), c = f.size(2);
    const Tensor tokens = ops::reshape(ops::transpose(mixed, {0, 3, 1, 2}), {nb, nt, c});
    return ops::add(proj(tokens), f);
}

}  // namespace esiqa::model
