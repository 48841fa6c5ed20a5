#include "esiqa/model/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "esiqa/tensor/ops.hpp"

namespace esiqa::model {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

Tensor ParameterSet::add(const std::string& name, Tensor value) {
    if (contains(name)) throw std::logic_error("parameters: duplicate name " + name);
    value.set_requires_grad(true);
    entries_.emplace_back(name, value);
    return value;
}

bool ParameterSet::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

Tensor ParameterSet::get(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw std::out_of_range("parameters: no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
}

std::vector<Tensor> ParameterSet::with_prefix(const std::string& prefix) const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : entries_) {
        if (n.starts_with(prefix)) out.push_back(t);
    }
    return out;
}

void ParameterSet::set_requires_grad(const std::string& prefix, bool flag) {
    for (auto& [n, t] : entries_) {
        if (n.starts_with(prefix)) t.set_requires_grad(flag);
    }
}

void ParameterSet::zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
}

void ParameterSet::zero(const std::string& prefix) {
    for (auto& [n, t] : entries_) {
        if (n.starts_with(prefix)) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    }
}

ParamBuilder ParamBuilder::scoped(const std::string& name) {
    // Child streams are derived from the parent stream so that adding a
    // parameter in one scope does not reshuffle the others.
    const std::uint64_t child_seed = rng_() ^ fnv1a(full_name(name));
    return ParamBuilder(params_, child_seed, full_name(name));
}

Tensor ParamBuilder::uniform(const std::string& name, Shape shape, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = dist(rng_);
    return params_.add(full_name(name), Tensor(std::move(shape), std::move(values)));
}

Tensor ParamBuilder::constant(const std::string& name, Shape shape, double value) {
    return params_.add(full_name(name), Tensor::full(std::move(shape), value));
}

Tensor ParamBuilder::xavier(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out) {
    return uniform(name, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

Linear Linear::make(ParamBuilder pb, std::size_t in, std::size_t out, bool with_bias) {
    Linear l{pb.xavier("weight", {in, out}, in, out), std::nullopt};
    if (with_bias) l.bias = pb.constant("bias", {out}, 0.0);
    return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

LayerNorm LayerNorm::make(ParamBuilder pb, std::size_t channels) {
    return {pb.constant("gamma", {channels}, 1.0), pb.constant("beta", {channels}, 0.0)};
}

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gamma, beta); }

DepthwiseConv DepthwiseConv::make(ParamBuilder pb, std::size_t channels) {
    return {pb.uniform("weight", {3, 3, channels}, 1.0 / 3.0), pb.constant("bias", {channels}, 0.0)};
}

Tensor DepthwiseConv::operator()(const Tensor& tokens, std::size_t h, std::size_t w) const {
    if (tokens.dim() != 3 || tokens.size(1) != h * w) {
        throw ShapeError("depthwise conv: " + std::to_string(tokens.dim() == 3 ? tokens.size(1) : 0) +
                         " tokens do not form a " + std::to_string(h) + "x" + std::to_string(w) + " grid");
    }
    const std::size_t nb = tokens.size(0), c = tokens.size(2);
    const Tensor grid = ops::reshape(tokens, {nb, h, w, c});
    return ops::reshape(ops::depthwise_conv3x3(grid, weight, bias), {nb, h * w, c});
}

Conv2d Conv2d::make(ParamBuilder pb, std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride,
                    std::size_t padding) {
    const std::size_t fan_in = cin * kernel * kernel;
    const std::size_t fan_out = cout * kernel * kernel;
    return {pb.xavier("weight", {cout, kernel, kernel, cin}, fan_in, fan_out), pb.constant("bias", {cout}, 0.0), stride,
            padding};
}

Tensor Conv2d::operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride, padding); }

FeedForward FeedForward::make(ParamBuilder pb, std::size_t channels, std::size_t ratio) {
    return {Linear::make(pb.scoped("fc1"), channels, channels * ratio),
            Linear::make(pb.scoped("fc2"), channels * ratio, channels)};
}

Tensor FeedForward::operator()(const Tensor& x) const { return fc2(ops::silu(fc1(x))); }

}  // namespace esiqa::model
