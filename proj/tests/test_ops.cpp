#include <gtest/gtest.h>

#include <random>

#include <cmath>

#include "reference.hpp"
#include "skywatch/anglenet.hpp"
#include "skywatch/image.hpp"
#include "skywatch/tensor.hpp"

using namespace skywatch;

namespace {

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Conv2dTest, ScalarKernelDoublesInput) {
    Tape tape;
    const Tensor out = ops::conv2d(tape, Tensor::full({1, 3, 3}, 1.0f), Tensor::full({1, 1, 1, 1}, 2.0f),
                                   Tensor::zeros({1}), Padding::kValid);
    EXPECT_EQ(out.shape(), (Shape{1, 3, 3}));
    EXPECT_EQ(values(out), std::vector<float>(9, 2.0f));
}

TEST(Conv2dTest, UnitKernelIsIdentity) {
    Tape tape;
    const Tensor x = Tensor::from({1, 2, 3}, {0.5f, -1.0f, 2.0f, 3.5f, 0.0f, 7.0f});
    for (auto padding : {Padding::kSame, Padding::kValid}) {
        const Tensor out = ops::conv2d(tape, x, Tensor::full({1, 1, 1, 1}, 1.0f), Tensor::zeros({1}), padding);
        EXPECT_EQ(values(out), values(x));
    }
}

TEST(Conv2dTest, SamePaddingKeepsSpatialSize) {
    Tape tape;
    const Tensor out =
        ops::conv2d(tape, Tensor::zeros({2, 7, 5}), Tensor::zeros({4, 2, 3, 3}), Tensor::zeros({4}), Padding::kSame);
    EXPECT_EQ(out.shape(), (Shape{4, 7, 5}));
}

TEST(Conv2dTest, RejectsMismatchedShapes) {
    Tape tape;
    EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}),
                             Padding::kValid),
                 ShapeError);
    EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({2}),
                             Padding::kValid),
                 ShapeError);
    EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}),
                             Padding::kValid),
                 ShapeError);
    EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1}),
                             Padding::kSame),
                 ShapeError);
}

TEST(MaxPoolTest, SingleWindow) {
    Tape tape;
    EXPECT_EQ(values(ops::maxpool2d(tape, Tensor::from({1, 2, 2}, {1, 2, 3, 4}))), std::vector<float>{4.0f});
}

TEST(MaxPoolTest, TiesRouteGradientToFirstElement) {
    Tensor x = Tensor::full({1, 4, 4}, 0.25f, true);
    Tape tape;
    const Tensor out = ops::maxpool2d(tape, x);
    EXPECT_EQ(values(out), std::vector<float>(4, 0.25f));
    tape.backward(ops::sum(tape, out));
    const std::vector<float> expected = {1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
    EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), expected);
}

TEST(MaxPoolTest, RejectsInputSmallerThanWindow) {
    Tape tape;
    EXPECT_THROW(ops::maxpool2d(tape, Tensor::zeros({1, 1, 4})), ShapeError);
}

TEST(DenseTest, IdentityWeights) {
    Tape tape;
    const Tensor out = ops::dense(tape, Tensor::from({2}, {3.0f, -4.0f}), Tensor::from({2, 2}, {1, 0, 0, 1}),
                                  Tensor::zeros({2}));
    EXPECT_EQ(values(out), (std::vector<float>{3.0f, -4.0f}));
}

TEST(DenseTest, RowSum) {
    Tape tape;
    const Tensor out =
        ops::dense(tape, Tensor::from({2}, {2.0f, 3.0f}), Tensor::from({1, 2}, {1, 1}), Tensor::zeros({1}));
    EXPECT_EQ(values(out), std::vector<float>{5.0f});
}

TEST(DenseTest, RejectsMismatchedShapes) {
    Tape tape;
    EXPECT_THROW(ops::dense(tape, Tensor::zeros({3}), Tensor::zeros({2, 2}), Tensor::zeros({2})), ShapeError);
    EXPECT_THROW(ops::dense(tape, Tensor::zeros({2}), Tensor::zeros({2, 2}), Tensor::zeros({3})), ShapeError);
}

TEST(ReluTest, ValuesAndSubgradientAtZero) {
    Tensor x = Tensor::from({3}, {-1.0f, 3.0f, 0.0f}, true);
    Tape tape;
    const Tensor y = ops::relu(tape, x);
    EXPECT_EQ(values(y), (std::vector<float>{0.0f, 3.0f, 0.0f}));
    tape.backward(ops::sum(tape, y));
    EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{0.0f, 1.0f, 0.0f}));
}

TEST(ConcatTest, StacksChannels) {
    const Tensor a = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from({1, 2, 2}, {5, 6, 7, 8});
    Tape tape;
    const Tensor c = ops::concat_channels(tape, a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 2, 2}));
    EXPECT_EQ(values(c), (std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(ConcatTest, ZerosDoNotChangeSum) {
    const Tensor x = Tensor::from({1, 2, 2}, {1.5f, -2.0f, 0.25f, 4.0f});
    Tape tape;
    const Tensor s = ops::sum(tape, ops::concat_channels(tape, x, Tensor::zeros({3, 2, 2})));
    EXPECT_FLOAT_EQ(s.item(), 3.75f);
}

TEST(ConcatTest, SumGradientIsOnes) {
    Tensor a = Tensor::zeros({2, 3, 3}, true);
    Tensor b = Tensor::zeros({1, 3, 3}, true);
    Tape tape;
    tape.backward(ops::sum(tape, ops::concat_channels(tape, a, b)));
    EXPECT_EQ(std::vector<float>(a.grad().begin(), a.grad().end()), std::vector<float>(18, 1.0f));
    EXPECT_EQ(std::vector<float>(b.grad().begin(), b.grad().end()), std::vector<float>(9, 1.0f));
}

TEST(ConcatTest, RejectsSpatialMismatch) {
    Tape tape;
    EXPECT_THROW(ops::concat_channels(tape, Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 2, 3})), ShapeError);
}

TEST(MseTest, Values) {
    Tape tape;
    EXPECT_FLOAT_EQ(ops::mse(tape, Tensor::from({2}, {1, 2}), Tensor::from({2}, {1, 2})).item(), 0.0f);
    EXPECT_FLOAT_EQ(ops::mse(tape, Tensor::from({2}, {0, 0}), Tensor::from({2}, {2, 2})).item(), 4.0f);
}

TEST(MseTest, TargetGetsNoGradient) {
    Tensor pred = Tensor::from({2}, {0.0f, 1.0f}, true);
    Tensor target = Tensor::from({2}, {1.0f, 1.0f}, true);
    Tape tape;
    tape.backward(ops::mse(tape, pred, target));
    EXPECT_FLOAT_EQ(pred.grad()[0], -1.0f);
    EXPECT_FALSE(target.has_grad());
}

TEST(ReshapeTest, KeepsDataAndRejectsWrongCount) {
    Tape tape;
    const Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(ops::reshape(tape, x, {3, 2}).shape(), (Shape{3, 2}));
    EXPECT_EQ(values(ops::flatten(tape, x)), values(x));
    EXPECT_THROW(ops::reshape(tape, x, {4, 2}), ShapeError);
}

TEST(AddTest, RejectsShapeMismatch) {
    Tape tape;
    EXPECT_THROW(ops::add(tape, Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST(GradCheckTest, EveryOpMatchesDoubleFiniteDifferences) {
    const auto checks = reference::check_all_ops(2024, 10);
    EXPECT_EQ(checks.size(), 13u);
    for (const auto& c : checks) {
        EXPECT_EQ(c.points, 10u) << c.op;
        EXPECT_LE(c.max_rel_error, 1e-3) << c.op;
    }
}

TEST(GradCheckTest, AngleNetParameterSpotCheck) {
    AngleNetConfig config;
    config.branch_widths = {2, 3};
    config.fusion_width = 3;
    config.hidden = {6, 4};
    const AngleNet model(config, 5);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image reference(1, 64, 64), test(1, 64, 64);
    for (auto& p : reference.pixels) p = u(rng);
    for (auto& p : test.pixels) p = u(rng);

    const auto checks = reference::check_anglenet_params(model, reference, test, 0.9, 5, 77);
    ASSERT_EQ(checks.size(), 5u);
    for (const auto& c : checks) {
        EXPECT_LE(c.rel_error, 1e-3) << c.name << "[" << c.index << "] engine " << c.engine << " fd "
                                     << c.finite_difference;
    }
}
