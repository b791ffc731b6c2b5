#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skywatch {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raised for every rejected shape or argument precondition in the tensor engine.
class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until a gradient is written
    bool requires_grad = false;
};
}  // namespace detail

/// Shared handle to a dense row-major float32 array with a gradient slot.
///
/// Copies of a Tensor alias the same storage; use clone() for a deep copy.
/// Model parameters rely on this: two layers holding the same handle share
/// weights.
class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<float> data();
    std::span<const float> data() const;
    float item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);

    bool has_grad() const;
    std::span<float> grad();
    std::span<const float> grad() const;
    /// Allocates a zero gradient if none exists yet.
    std::span<float> ensure_grad();
    void zero_grad();
    void clear_grad();

    /// Deep copy of data and requires_grad; the gradient is not copied.
    Tensor clone() const;
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

   private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    const detail::TensorImpl& checked() const;
    detail::TensorImpl& checked();

    std::shared_ptr<detail::TensorImpl> impl_;
};

enum class GradMode { kRecord, kNoGrad };

/// Ordered record of executed differentiable operations.
///
/// Ops append one node per call when the tape records and at least one input
/// requires a gradient. backward() walks the nodes in exact reverse order.
class Tape {
   public:
    explicit Tape(GradMode mode = GradMode::kRecord) : mode_(mode) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return mode_ == GradMode::kRecord; }
    bool should_record(std::initializer_list<const Tensor*> inputs) const;

    /// Registers an executed op. `output` must be the tensor the op produced;
    /// `backward` reads output's grad and accumulates into the inputs.
    void record(std::string_view name, const Tensor& output, std::function<void()> backward);

    /// Seeds d(loss)/d(loss) = 1 and runs every node in reverse order.
    /// Intermediate grads are reset first, so leaf grads accumulate additively
    /// across repeated calls.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }
    std::vector<std::string> op_names() const;
    void clear() { nodes_.clear(); }

   private:
    struct Node {
        std::string name;
        std::shared_ptr<detail::TensorImpl> output;
        std::function<void()> backward;
    };
    GradMode mode_;
    std::vector<Node> nodes_;
};

enum class Padding { kSame, kValid };

namespace ops {

/// Stride-1 cross-correlation. input [C_in,H,W], kernels [C_out,C_in,kH,kW],
/// bias [C_out]. kSame pads by k/2 on each side (odd kernels only).
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              Padding padding);
/// 2x2 window, stride 2. Gradient goes to the first row-major argmax.
Tensor maxpool2d(Tape& tape, const Tensor& input);
/// weights [m,n] * input [n] + bias [m].
Tensor dense(Tape& tape, const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor relu(Tape& tape, const Tensor& input);
Tensor tanh(Tape& tape, const Tensor& input);
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
Tensor reshape(Tape& tape, const Tensor& input, Shape shape);
Tensor flatten(Tape& tape, const Tensor& input);
/// Mean of squared differences; `target` never receives a gradient.
Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target);
Tensor sum(Tape& tape, const Tensor& input);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& input, float factor);

}  // namespace ops
}  // namespace skywatch
