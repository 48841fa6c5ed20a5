#include "esiqa/tensor/tensor.hpp"

#include <sstream>

namespace esiqa {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: extents must be non-empty (use [1] for scalars)");
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
    }
}

thread_local bool t_grad_enabled = true;

}  // namespace

Tensor::Tensor() : Tensor(Shape{1}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values for extents " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    validate_shape(shape);
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
}

std::size_t Tensor::size(std::size_t axis) const {
    if (axis >= dim()) throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return node_->shape[axis];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("tensor: item() on extents " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != dim()) throw ShapeError("tensor: index rank mismatch for " + shape_str(shape()));
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= node_->shape[axis]) throw std::out_of_range("tensor: index out of range");
        offset = offset * node_->shape[axis] + i;
        ++axis;
    }
    return node_->data[offset];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    return *this;
}

Tensor Tensor::grad_tensor() const {
    if (!has_grad()) return Tensor::zeros(shape());
    return Tensor(shape(), node_->grad);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

}  // namespace esiqa
