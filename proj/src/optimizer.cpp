#include "skywatch/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace skywatch {

OptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "sgd") return OptimizerKind::kSgd;
    if (name == "adam") return OptimizerKind::kAdam;
    throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
    if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (config_.kind == OptimizerKind::kAdam) {
        for (const auto& p : params_) {
            first_moment_.emplace_back(p.numel(), 0.0f);
            second_moment_.emplace_back(p.numel(), 0.0f);
        }
    }
}

void Optimizer::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    config_.learning_rate = lr;
}

void Optimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i].has_grad()) {
            throw std::logic_error("optimizer step: parameter " + std::to_string(i) + " of shape " +
                                   shape_to_string(params_[i].shape()) + " has no gradient");
        }
    }
    ++steps_;
    const auto lr = static_cast<float>(config_.learning_rate);
    if (config_.kind == OptimizerKind::kSgd) {
        for (auto& p : params_) {
            auto w = p.data();
            auto g = p.grad();
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
        }
        return;
    }
    const auto b1 = static_cast<float>(config_.beta1);
    const auto b2 = static_cast<float>(config_.beta2);
    const auto eps = static_cast<float>(config_.epsilon);
    const auto t = static_cast<double>(steps_);
    const auto correction1 = static_cast<float>(1.0 - std::pow(config_.beta1, t));
    const auto correction2 = static_cast<float>(1.0 - std::pow(config_.beta2, t));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i].data();
        auto g = params_[i].grad();
        auto& m = first_moment_[i];
        auto& v = second_moment_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            const float m_hat = m[k] / correction1;
            const float v_hat = v[k] / correction2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace skywatch
