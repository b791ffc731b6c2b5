#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skywatch/tensor.hpp"

namespace skywatch {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::kSgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Gradient-descent stepper over a fixed parameter list. Plain descent by
/// default; Adam keeps per-parameter first/second moment buffers shaped like
/// the parameters.
class Optimizer {
   public:
    Optimizer(std::vector<Tensor> params, OptimizerConfig config);

    /// Applies one update from the current grads. Throws if any parameter has
    /// no gradient (backward was not run).
    void step();
    void zero_grad();

    void set_learning_rate(double lr);
    double learning_rate() const { return config_.learning_rate; }
    std::uint64_t steps() const { return steps_; }
    const std::vector<Tensor>& params() const { return params_; }

   private:
    std::vector<Tensor> params_;
    OptimizerConfig config_;
    std::vector<std::vector<float>> first_moment_;
    std::vector<std::vector<float>> second_moment_;
    std::uint64_t steps_ = 0;
};

}  // namespace skywatch
