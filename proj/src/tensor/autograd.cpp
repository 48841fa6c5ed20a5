#include "esiqa/tensor/autograd.hpp"

#include <cmath>
#include <unordered_set>

namespace esiqa {

using detail::TensorNode;

const Tensor& Gradients::of(const Tensor& leaf) const {
    auto it = grads_.find(leaf.id());
    if (it == grads_.end()) throw AutogradError("gradients: tensor was not reached by the backward pass");
    return it->second;
}

namespace {

// Reverse topological order over nodes that participate in differentiation.
std::vector<TensorNode*> topo_order(TensorNode* root) {
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    return order;  // parents before children
}

}  // namespace

Gradients backward(const Tensor& loss) {
    if (loss.numel() != 1) throw AutogradError("backward: loss must be scalar, got extents " + shape_str(loss.shape()));
    TensorNode* root = loss.node().get();
    if (!root->requires_grad) throw AutogradError("backward: loss does not depend on any tensor requiring gradient");

    const auto order = topo_order(root);
    std::vector<std::pair<TensorNode*, std::vector<double>>> leaves;
    // Interior gradients start from zero for each pass; leaf buffers accumulate.
    for (TensorNode* n : order) {
        if (n->backward) n->grad.assign(n->data.size(), 0.0);
    }
    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward) n->backward(*n);
    }

    Gradients result;
    for (TensorNode* n : order) {
        if (n->backward || n == root) continue;
        result.insert(n, Tensor(n->shape, n->grad));
    }
    if (result.size() == 0 && !root->backward) result.insert(root, Tensor(root->shape, root->grad));
    return result;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_gradient: epsilon must be positive");
    NoGradGuard no_grad;
    auto values = x.mutable_data();
    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + epsilon;
        const double up = f(x);
        values[i] = saved - epsilon;
        const double down = f(x);
        values[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("finite_difference_gradient: non-finite function value at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * epsilon);
    }
    return Tensor(x.shape(), std::move(grad));
}

}  // namespace esiqa
