#include "skywatch/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace skywatch {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_to_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values but " +
                         std::to_string(data.size()) + " were given");
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const detail::TensorImpl& Tensor::checked() const {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

detail::TensorImpl& Tensor::checked() {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<float> Tensor::data() { return checked().data; }
std::span<const float> Tensor::data() const { return checked().data; }

float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
    return checked().data[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    checked().requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return !checked().grad.empty(); }
std::span<float> Tensor::grad() { return checked().grad; }
std::span<const float> Tensor::grad() const { return checked().grad; }

std::span<float> Tensor::ensure_grad() {
    auto& impl = checked();
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0f);
    return impl.grad;
}

void Tensor::zero_grad() {
    auto& impl = checked();
    if (!impl.grad.empty()) std::fill(impl.grad.begin(), impl.grad.end(), 0.0f);
}

void Tensor::clear_grad() {
    auto& impl = checked();
    impl.grad.clear();
    impl.grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
    const auto& impl = checked();
    return from(impl.shape, impl.data, impl.requires_grad);
}

bool Tape::should_record(std::initializer_list<const Tensor*> inputs) const {
    if (!recording()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void Tape::record(std::string_view name, const Tensor& output, std::function<void()> backward) {
    nodes_.push_back(Node{std::string(name), output.impl(), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
    }
    for (auto& node : nodes_) {
        node.output->grad.assign(node.output->data.size(), 0.0f);
    }
    Tensor seed = loss;
    seed.ensure_grad()[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward();
    }
}

std::vector<std::string> Tape::op_names() const {
    std::vector<std::string> names;
    names.reserve(nodes_.size());
    for (const auto& node : nodes_) names.push_back(node.name);
    return names;
}

}  // namespace skywatch
