#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "skywatch/tensor.hpp"

namespace skywatch::ops {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXf>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXf>;

[[noreturn]] void reject(std::string_view op, const std::string& detail) {
    throw ShapeError(std::string(op) + ": " + detail);
}

void require_rank(std::string_view op, const char* what, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        reject(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_to_string(t.shape()));
    }
}

void accumulate(Tensor& target, std::span<const float> delta) {
    if (!target.requires_grad()) return;
    auto g = target.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

struct ConvGeometry {
    std::size_t in_channels, height, width;
    std::size_t out_channels, kernel_h, kernel_w;
    std::size_t pad_h, pad_w;
    std::size_t out_h, out_w;

    std::size_t patch() const { return in_channels * kernel_h * kernel_w; }
    std::size_t positions() const { return out_h * out_w; }
};

// Unfolds input into [C_in*kH*kW, H'*W'] so the convolution becomes one GEMM.
void im2col(const ConvGeometry& g, std::span<const float> input, std::vector<float>& col) {
    col.assign(g.patch() * g.positions(), 0.0f);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        const float* plane = input.data() + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
                float* dst = col.data() + row * g.positions();
                for (std::size_t y = 0; y < g.out_h; ++y) {
                    const long sy = static_cast<long>(y + ki) - static_cast<long>(g.pad_h);
                    if (sy < 0 || sy >= static_cast<long>(g.height)) continue;
                    const float* src_row = plane + static_cast<std::size_t>(sy) * g.width;
                    float* dst_row = dst + y * g.out_w;
                    const long x_lo = std::max<long>(0, static_cast<long>(g.pad_w) - static_cast<long>(kj));
                    const long x_hi = std::min<long>(static_cast<long>(g.out_w),
                                                     static_cast<long>(g.width + g.pad_w) - static_cast<long>(kj));
                    for (long x = x_lo; x < x_hi; ++x) {
                        dst_row[x] = src_row[x + static_cast<long>(kj) - static_cast<long>(g.pad_w)];
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, std::span<const float> col, std::span<float> input_grad) {
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        float* plane = input_grad.data() + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
                const float* src = col.data() + row * g.positions();
                for (std::size_t y = 0; y < g.out_h; ++y) {
                    const long sy = static_cast<long>(y + ki) - static_cast<long>(g.pad_h);
                    if (sy < 0 || sy >= static_cast<long>(g.height)) continue;
                    float* dst_row = plane + static_cast<std::size_t>(sy) * g.width;
                    const float* src_row = src + y * g.out_w;
                    const long x_lo = std::max<long>(0, static_cast<long>(g.pad_w) - static_cast<long>(kj));
                    const long x_hi = std::min<long>(static_cast<long>(g.out_w),
                                                     static_cast<long>(g.width + g.pad_w) - static_cast<long>(kj));
                    for (long x = x_lo; x < x_hi; ++x) {
                        dst_row[x + static_cast<long>(kj) - static_cast<long>(g.pad_w)] += src_row[x];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias, Padding padding) {
    constexpr std::string_view kOp = "conv2d";
    require_rank(kOp, "input", input, 3);
    require_rank(kOp, "kernels", kernels, 4);
    require_rank(kOp, "bias", bias, 1);
    ConvGeometry g{};
    g.in_channels = input.dim(0);
    g.height = input.dim(1);
    g.width = input.dim(2);
    g.out_channels = kernels.dim(0);
    g.kernel_h = kernels.dim(2);
    g.kernel_w = kernels.dim(3);
    if (kernels.dim(1) != g.in_channels) {
        reject(kOp, "kernels " + shape_to_string(kernels.shape()) + " do not match input channels of " +
                        shape_to_string(input.shape()));
    }
    if (bias.dim(0) != g.out_channels) {
        reject(kOp, "bias " + shape_to_string(bias.shape()) + " does not match kernels " +
                        shape_to_string(kernels.shape()));
    }
    if (g.kernel_h == 0 || g.kernel_w == 0 || g.kernel_h > g.height || g.kernel_w > g.width) {
        reject(kOp, "kernels " + shape_to_string(kernels.shape()) + " do not fit input " +
                        shape_to_string(input.shape()));
    }
    if (padding == Padding::kSame) {
        if (g.kernel_h % 2 == 0 || g.kernel_w % 2 == 0) {
            reject(kOp, "same padding needs odd kernels, got " + shape_to_string(kernels.shape()));
        }
        g.pad_h = g.kernel_h / 2;
        g.pad_w = g.kernel_w / 2;
    }
    g.out_h = g.height + 2 * g.pad_h - g.kernel_h + 1;
    g.out_w = g.width + 2 * g.pad_w - g.kernel_w + 1;

    auto col = std::make_shared<std::vector<float>>();
    im2col(g, input.data(), *col);

    Tensor out = Tensor::zeros({g.out_channels, g.out_h, g.out_w});
    {
        ConstMatrixMap k(kernels.data().data(), g.out_channels, g.patch());
        ConstMatrixMap c(col->data(), g.patch(), g.positions());
        MatrixMap o(out.data().data(), g.out_channels, g.positions());
        o.noalias() = k * c;
        auto b = bias.data();
        for (std::size_t oc = 0; oc < g.out_channels; ++oc) o.row(oc).array() += b[oc];
    }

    if (tape.should_record({&input, &kernels, &bias})) {
        out.set_requires_grad(true);
        tape.record(kOp, out, [g, col, input = Tensor(input), kernels = Tensor(kernels), bias = Tensor(bias), out]() mutable {
            ConstMatrixMap dout(out.grad().data(), g.out_channels, g.positions());
            if (kernels.requires_grad()) {
                MatrixMap dk(kernels.ensure_grad().data(), g.out_channels, g.patch());
                ConstMatrixMap c(col->data(), g.patch(), g.positions());
                dk.noalias() += dout * c.transpose();
            }
            if (bias.requires_grad()) {
                auto db = bias.ensure_grad();
                // Plain loop: Eigen's reductions peel by pointer alignment, which
                // would make the summation order depend on heap layout.
                const float* d = out.grad().data();
                for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
                    float acc = 0.0f;
                    for (std::size_t p = 0; p < g.positions(); ++p) acc += d[oc * g.positions() + p];
                    db[oc] += acc;
                }
            }
            if (input.requires_grad()) {
                ConstMatrixMap k(kernels.data().data(), g.out_channels, g.patch());
                RowMatrix dcol = k.transpose() * dout;
                col2im_add(g, std::span<const float>(dcol.data(), static_cast<std::size_t>(dcol.size())),
                           input.ensure_grad());
            }
        });
    }
    return out;
}

Tensor maxpool2d(Tape& tape, const Tensor& input) {
    constexpr std::string_view kOp = "maxpool2d";
    require_rank(kOp, "input", input, 3);
    const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
    if (height % 2 != 0 || width % 2 != 0 || height == 0 || width == 0) {
        reject(kOp, "spatial dims must be even and nonzero, got " + shape_to_string(input.shape()));
    }
    const std::size_t oh = height / 2, ow = width / 2;
    Tensor out = Tensor::zeros({channels, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(channels * oh * ow);
    auto in = input.data();
    auto o = out.data();
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const std::size_t base = c * height * width + 2 * y * width + 2 * x;
                const std::size_t candidates[4] = {base, base + 1, base + width, base + width + 1};
                std::size_t best = candidates[0];
                for (std::size_t k = 1; k < 4; ++k) {
                    // strict comparison keeps the first row-major maximum on ties
                    if (in[candidates[k]] > in[best]) best = candidates[k];
                }
                const std::size_t idx = (c * oh + y) * ow + x;
                o[idx] = in[best];
                (*argmax)[idx] = best;
            }
        }
    }
    if (tape.should_record({&input})) {
        out.set_requires_grad(true);
        tape.record(kOp, out, [argmax, input = Tensor(input), out]() mutable {
            auto dx = input.ensure_grad();
            auto dy = out.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
        });
    }
    return out;
}

Tensor dense(Tape& tape, const Tensor& input, const Tensor& weights, const Tensor& bias) {
    constexpr std::string_view kOp = "dense";
    require_rank(kOp, "input", input, 1);
    require_rank(kOp, "weights", weights, 2);
    require_rank(kOp, "bias", bias, 1);
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    if (input.dim(0) != n || bias.dim(0) != m) {
        reject(kOp, "weights " + shape_to_string(weights.shape()) + " incompatible with input " +
                        shape_to_string(input.shape()) + " and bias " + shape_to_string(bias.shape()));
    }
    Tensor out = Tensor::zeros({m});
    {
        ConstMatrixMap w(weights.data().data(), m, n);
        ConstVectorMap x(input.data().data(), n);
        ConstVectorMap b(bias.data().data(), m);
        VectorMap y(out.data().data(), m);
        y.noalias() = w * x;
        y += b;
    }
    if (tape.should_record({&input, &weights, &bias})) {
        out.set_requires_grad(true);
        tape.record(kOp, out, [m, n, input = Tensor(input), weights = Tensor(weights), bias = Tensor(bias), out]() mutable {
            ConstVectorMap dy(out.grad().data(), m);
            if (weights.requires_grad()) {
                MatrixMap dw(weights.ensure_grad().data(), m, n);
                ConstVectorMap x(input.data().data(), n);
                dw.noalias() += dy * x.transpose();
            }
            if (bias.requires_grad()) {
                VectorMap db(bias.ensure_grad().data(), m);
                db += dy;
            }
            if (input.requires_grad()) {
                ConstMatrixMap w(weights.data().data(), m, n);
                VectorMap dx(input.ensure_grad().data(), n);
                dx.noalias() += w.transpose() * dy;
            }
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& input) {
    Tensor out = Tensor::zeros(input.shape());
    auto in = input.data();
    auto o = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;
    if (tape.should_record({&input})) {
        out.set_requires_grad(true);
        tape.record("relu", out, [input = Tensor(input), out]() mutable {
            auto dx = input.ensure_grad();
            auto dy = out.grad();
            auto x = input.data();
            // subgradient at exactly zero is zero
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += x[i] > 0.0f ? dy[i] : 0.0f;
        });
    }
    return out;
}

Tensor tanh(Tape& tape, const Tensor& input) {
    Tensor out = Tensor::zeros(input.shape());
    auto in = input.data();
    auto o = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = std::tanh(in[i]);
    if (tape.should_record({&input})) {
        out.set_requires_grad(true);
        tape.record("tanh", out, [input = Tensor(input), out]() mutable {
            auto dx = input.ensure_grad();
            auto dy = out.grad();
            auto y = out.data();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * (1.0f - y[i] * y[i]);
        });
    }
    return out;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
    constexpr std::string_view kOp = "concat_channels";
    require_rank(kOp, "first input", a, 3);
    require_rank(kOp, "second input", b, 3);
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        reject(kOp, "spatial mismatch between " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    Tensor out = Tensor::zeros({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    auto o = out.data();
    std::copy(a.data().begin(), a.data().end(), o.begin());
    std::copy(b.data().begin(), b.data().end(), o.begin() + static_cast<std::ptrdiff_t>(a.numel()));
    if (tape.should_record({&a, &b})) {
        out.set_requires_grad(true);
        tape.record(kOp, out, [a = Tensor(a), b = Tensor(b), out]() mutable {
            auto dy = out.grad();
            accumulate(a, dy.first(a.numel()));
            accumulate(b, dy.subspan(a.numel()));
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& input, Shape shape) {
    if (shape_numel(shape) != input.numel()) {
        reject("reshape", "cannot view " + shape_to_string(input.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<float> copy(input.data().begin(), input.data().end());
    Tensor out = Tensor::from(std::move(shape), std::move(copy));
    if (tape.should_record({&input})) {
        out.set_requires_grad(true);
        tape.record("reshape", out, [input = Tensor(input), out]() mutable { accumulate(input, out.grad()); });
    }
    return out;
}

Tensor flatten(Tape& tape, const Tensor& input) { return reshape(tape, input, {input.numel()}); }

Tensor mse(Tape& tape, const Tensor& pred, const Tensor& target) {
    if (pred.numel() != target.numel() || pred.numel() == 0) {
        reject("mse", "length mismatch between prediction " + shape_to_string(pred.shape()) + " and target " +
                          shape_to_string(target.shape()));
    }
    const std::size_t n = pred.numel();
    auto p = pred.data();
    auto t = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        acc += d * d;
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    if (tape.should_record({&pred})) {
        out.set_requires_grad(true);
        tape.record("mse", out, [n, pred = Tensor(pred), target = Tensor(target), out]() mutable {
            auto dp = pred.ensure_grad();
            auto p = pred.data();
            auto t = target.data();
            const float g = out.grad()[0] * 2.0f / static_cast<float>(n);
            for (std::size_t i = 0; i < n; ++i) dp[i] += g * (p[i] - t[i]);
        });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& input) {
    double acc = 0.0;
    for (float v : input.data()) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    if (tape.should_record({&input})) {
        out.set_requires_grad(true);
        tape.record("sum", out, [input = Tensor(input), out]() mutable {
            auto dx = input.ensure_grad();
            const float g = out.grad()[0];
            for (auto& v : dx) v += g;
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        reject("add", "shape mismatch between " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    if (tape.should_record({&a, &b})) {
        out.set_requires_grad(true);
        tape.record("add", out, [a = Tensor(a), b = Tensor(b), out]() mutable {
            accumulate(a, out.grad());
            accumulate(b, out.grad());
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& input, float factor) {
    Tensor out = Tensor::zeros(input.shape());
    auto o = out.data();
    auto x = input.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
    if (tape.should_record({&input})) {
        out.set_requires_grad(true);
        tape.record("scale", out, [input = Tensor(input), out, factor]() mutable {
            auto dx = input.ensure_grad();
            auto dy = out.grad();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
        });
    }
    return out;
}

}  // namespace skywatch::ops
