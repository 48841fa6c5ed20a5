#pragma once

#include <functional>
#include <unordered_map>

#include "esiqa/tensor/tensor.hpp"

namespace esiqa {

/// Gradients of one backward pass, keyed by the leaf tensors that received them.
class Gradients {
public:
    bool contains(const Tensor& leaf) const { return grads_.contains(leaf.id()); }
    const Tensor& of(const Tensor& leaf) const;
    std::size_t size() const { return grads_.size(); }

    void insert(const void* leaf_id, Tensor grad) { grads_.insert_or_assign(leaf_id, std::move(grad)); }

private:
    std::unordered_map<const void*, Tensor> grads_;
};

/// Reverse-mode pass from a scalar loss. Leaf gradients accumulate across
/// calls (clear them with Tensor::zero_grad); the returned map holds the
/// leaf gradient values after this pass.
Gradients backward(const Tensor& loss);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps per coordinate.
/// `x` is perturbed in place and restored; f must be deterministic.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double epsilon);

}  // namespace esiqa
