#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa::model {

/// Named, ordered collection of trainable tensors.
class ParameterSet {
public:
    Tensor add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const;
    Tensor get(const std::string& name) const;
    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    /// Names starting with `prefix`.
    std::vector<Tensor> with_prefix(const std::string& prefix) const;
    void set_requires_grad(const std::string& prefix, bool flag);
    void zero_grad();
    /// Fills every parameter whose name starts with `prefix` with zeros.
    void zero(const std::string& prefix);

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Creates parameters under a dotted name prefix with seeded initialization.
class ParamBuilder {
public:
    ParamBuilder(ParameterSet& params, std::uint64_t seed) : params_(params), rng_(seed) {}

    ParamBuilder scoped(const std::string& name);

    Tensor uniform(const std::string& name, Shape shape, double bound);
    Tensor constant(const std::string& name, Shape shape, double value);
    /// Xavier-uniform fan_in/fan_out initialization.
    Tensor xavier(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out);

    std::string full_name(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

private:
    ParamBuilder(ParameterSet& params, std::uint64_t seed, std::string prefix)
        : params_(params), rng_(seed), prefix_(std::move(prefix)) {}

    ParameterSet& params_;
    std::mt19937_64 rng_;
    std::string prefix_;
};

struct Linear {
    Tensor weight;  // [in,out]
    std::optional<Tensor> bias;

    static Linear make(ParamBuilder pb, std::size_t in, std::size_t out, bool with_bias = true);
    Tensor operator()(const Tensor& x) const;
    std::size_t in_features() const { return weight.size(0); }
    std::size_t out_features() const { return weight.size(1); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    static LayerNorm make(ParamBuilder pb, std::size_t channels);
    Tensor operator()(const Tensor& x) const;
};

/// Depthwise 3x3 convolution over a token grid.
struct DepthwiseConv {
    Tensor weight;  // [3,3,C]
    Tensor bias;    // [C]

    static DepthwiseConv make(ParamBuilder pb, std::size_t channels);
    /// tokens [B,T,C] with T = h*w -> [B,T,C]
    Tensor operator()(const Tensor& tokens, std::size_t h, std::size_t w) const;
};

struct Conv2d {
    Tensor weight;  // [Cout,K,K,Cin]
    Tensor bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static Conv2d make(ParamBuilder pb, std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride,
                       std::size_t padding);
    Tensor operator()(const Tensor& x) const;
};

/// FFN: linear -> SiLU -> linear.
struct FeedForward {
    Linear fc1;
    Linear fc2;

    static FeedForward make(ParamBuilder pb, std::size_t channels, std::size_t ratio);
    Tensor operator()(const Tensor& x) const;
};

}  // namespace esiqa::model
