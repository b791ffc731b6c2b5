#include <gtest/gtest.h>

#include <random>

#include "skywatch/optimizer.hpp"
#include "skywatch/tensor.hpp"

using namespace skywatch;

TEST(TensorTest, CopiesAliasAndCloneIsDeep) {
    Tensor a = Tensor::from({2}, {1.0f, 2.0f}, true);
    Tensor alias = a;
    Tensor copy = a.clone();
    alias.data()[0] = 5.0f;
    EXPECT_EQ(a.data()[0], 5.0f);
    EXPECT_EQ(copy.data()[0], 1.0f);
    EXPECT_TRUE(a.same_storage(alias));
    EXPECT_FALSE(a.same_storage(copy));
    EXPECT_TRUE(copy.requires_grad());
}

TEST(TensorTest, RejectsMismatchedDataSize) {
    EXPECT_THROW(Tensor::from({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);
}

TEST(TensorTest, GradIsEmptyUntilWritten) {
    Tensor a = Tensor::zeros({3}, true);
    EXPECT_FALSE(a.has_grad());
    a.ensure_grad()[1] = 2.0f;
    EXPECT_TRUE(a.has_grad());
    a.zero_grad();
    EXPECT_EQ(a.grad()[1], 0.0f);
    a.clear_grad();
    EXPECT_FALSE(a.has_grad());
}

TEST(TapeTest, SquareGradient) {
    // mse against zero on one element is x^2.
    Tensor x = Tensor::scalar(3.0f, true);
    Tape tape;
    Tensor loss = ops::mse(tape, x, Tensor::scalar(0.0f));
    tape.backward(loss);
    EXPECT_FLOAT_EQ(loss.item(), 9.0f);
    EXPECT_FLOAT_EQ(x.grad()[0], 6.0f);
}

TEST(TapeTest, ReusedInputAccumulates) {
    Tensor x = Tensor::scalar(1.0f, true);
    Tape tape;
    Tensor loss = ops::add(tape, x, x);
    tape.backward(loss);
    EXPECT_FLOAT_EQ(loss.item(), 2.0f);
    EXPECT_FLOAT_EQ(x.grad()[0], 2.0f);
}

TEST(TapeTest, RepeatedBackwardAccumulatesLeafGrads) {
    Tensor x = Tensor::from({2}, {1.0f, -2.0f}, true);
    Tape tape;
    Tensor loss = ops::sum(tape, ops::scale(tape, x, 3.0f));
    tape.backward(loss);
    tape.backward(loss);
    EXPECT_FLOAT_EQ(x.grad()[0], 6.0f);
    EXPECT_FLOAT_EQ(x.grad()[1], 6.0f);
}

TEST(TapeTest, RecordsOnlyWhenSomeInputRequiresGrad) {
    Tensor frozen = Tensor::from({2}, {1.0f, 2.0f});
    Tensor live = Tensor::from({2}, {1.0f, 2.0f}, true);
    Tape tape;
    ops::relu(tape, frozen);
    EXPECT_EQ(tape.size(), 0u);
    ops::relu(tape, live);
    ops::add(tape, frozen, live);
    EXPECT_EQ(tape.op_names(), (std::vector<std::string>{"relu", "add"}));

    Tape off(GradMode::kNoGrad);
    ops::relu(off, live);
    EXPECT_EQ(off.size(), 0u);
}

TEST(TapeTest, BackwardNeedsScalarLoss) {
    Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
    Tape tape;
    Tensor y = ops::relu(tape, x);
    EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(OptimizerTest, PlainDescentStep) {
    Tensor p = Tensor::scalar(1.0f, true);
    p.ensure_grad()[0] = 2.0f;
    Optimizer opt({p}, {OptimizerKind::kSgd, 0.1});
    opt.step();
    EXPECT_FLOAT_EQ(p.item(), 0.8f);
}

TEST(OptimizerTest, ZeroGradLeavesParameter) {
    for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
        Tensor p = Tensor::scalar(1.5f, true);
        p.ensure_grad();
        Optimizer opt({p}, {kind, 0.1});
        opt.step();
        EXPECT_EQ(p.item(), 1.5f) << to_string(kind);
    }
}

TEST(OptimizerTest, StepWithoutGradientThrows) {
    Tensor p = Tensor::scalar(1.0f, true);
    Optimizer opt({p}, {});
    EXPECT_THROW(opt.step(), std::logic_error);
}

TEST(OptimizerTest, ParsesKinds) {
    EXPECT_EQ(parse_optimizer_kind("adam"), OptimizerKind::kAdam);
    EXPECT_EQ(parse_optimizer_kind("sgd"), OptimizerKind::kSgd);
    EXPECT_THROW(parse_optimizer_kind("rmsprop"), std::invalid_argument);
}

namespace {

std::vector<float> run_hundred_steps(OptimizerKind kind, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    std::vector<float> w(12), x(4), b(3), target(3);
    for (auto* v : {&w, &x, &b, &target})
        for (auto& e : *v) e = normal(rng);
    Tensor weights = Tensor::from({3, 4}, w, true);
    Tensor bias = Tensor::from({3}, b, true);
    const Tensor input = Tensor::from({4}, x);
    const Tensor goal = Tensor::from({3}, target);
    Optimizer opt({weights, bias}, {kind, 0.01});
    for (int i = 0; i < 100; ++i) {
        opt.zero_grad();
        Tape tape;
        tape.backward(ops::mse(tape, ops::tanh(tape, ops::dense(tape, input, weights, bias)), goal));
        opt.step();
    }
    std::vector<float> out(weights.data().begin(), weights.data().end());
    out.insert(out.end(), bias.data().begin(), bias.data().end());
    return out;
}

}  // namespace

TEST(OptimizerTest, SameSeedIsBitIdenticalAfterHundredSteps) {
    for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
        EXPECT_EQ(run_hundred_steps(kind, 9), run_hundred_steps(kind, 9)) << to_string(kind);
    }
}

TEST(OptimizerTest, AdamFirstStepMovesByLearningRate) {
    // With bias correction the first Adam step is lr * g / (|g| + eps').
    Tensor p = Tensor::from({2}, {1.0f, 1.0f}, true);
    p.ensure_grad()[0] = 4.0f;
    p.grad()[1] = -0.5f;
    Optimizer opt({p}, {OptimizerKind::kAdam, 0.01});
    opt.step();
    EXPECT_NEAR(p.data()[0], 0.99f, 1e-6);
    EXPECT_NEAR(p.data()[1], 1.01f, 1e-6);
    EXPECT_EQ(opt.steps(), 1u);
}
