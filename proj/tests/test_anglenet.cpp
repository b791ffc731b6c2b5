#include <gtest/gtest.h>

#include <cmath>

#include "skywatch/anglenet.hpp"
#include "skywatch/synthetic.hpp"

using namespace skywatch;

namespace {

AngleNetConfig small_config() {
    AngleNetConfig c;
    c.branch_widths = {4, 4};
    c.fusion_width = 4;
    c.hidden = {16, 8};
    return c;
}

std::vector<float> flat_parameters(const AngleNet& model) {
    std::vector<float> out;
    for (const auto& p : model.parameters()) out.insert(out.end(), p.data().begin(), p.data().end());
    return out;
}

Image scene_frame(std::uint64_t seed) { return rotate_augment(SceneRenderer(seed).render({}), 0.0); }

}  // namespace

TEST(AngleNetTest, SameSeedGivesIdenticalParameters) {
    EXPECT_EQ(flat_parameters(AngleNet({}, 42)), flat_parameters(AngleNet({}, 42)));
    EXPECT_NE(flat_parameters(AngleNet({}, 42)), flat_parameters(AngleNet({}, 43)));
}

TEST(AngleNetTest, BranchesShareWeights) {
    const AngleNet model({}, 1);
    ASSERT_EQ(model.branch(0).size(), model.branch(1).size());
    for (std::size_t i = 0; i < model.branch(0).size(); ++i) {
        EXPECT_TRUE(model.branch(0)[i].kernels.same_storage(model.branch(1)[i].kernels));
        EXPECT_TRUE(model.branch(0)[i].bias.same_storage(model.branch(1)[i].bias));
    }
    Tensor k = model.branch(0)[0].kernels;
    k.data()[0] = 123.0f;
    EXPECT_EQ(model.branch(1)[0].kernels.data()[0], 123.0f);
}

TEST(AngleNetTest, ZeroImagesGiveFiniteNonNegativeOutput) {
    const AngleNet model({}, 7);
    const Image zero(1, kFrameSize, kFrameSize, 0.0f);
    const auto est = model.estimate(zero, zero);
    EXPECT_TRUE(std::isfinite(est.angle_deg));
    EXPECT_GE(est.angle_deg, 0.0);
    EXPECT_DOUBLE_EQ(est.sigma_l, est.angle_deg / 90.0);
}

TEST(AngleNetTest, RejectsWrongImageSize) {
    const AngleNet model(small_config(), 7);
    const Image ok(1, 64, 64), small(1, 32, 32), rgb(3, 64, 64);
    EXPECT_THROW(model.estimate(ok, small), ShapeError);
    EXPECT_THROW(model.estimate(rgb, ok), ShapeError);
}

TEST(AngleNetTest, RejectsInvalidConfig) {
    AngleNetConfig c;
    c.input_size = 32;
    EXPECT_THROW(AngleNet(c, 1), std::invalid_argument);
    c = {};
    c.branch_widths = {8, 0};
    EXPECT_THROW(AngleNet(c, 1), std::invalid_argument);
    c = {};
    c.kernel_size = 4;
    EXPECT_THROW(AngleNet(c, 1), std::invalid_argument);
    c = {};
    c.branch_widths = {4, 4, 4, 4, 4, 4};
    EXPECT_THROW(AngleNet(c, 1), std::invalid_argument);
}

TEST(AngleNetTest, CloneOwnsItsStorage) {
    const AngleNet model(small_config(), 2);
    const AngleNet copy = model.clone();
    EXPECT_EQ(flat_parameters(model), flat_parameters(copy));
    EXPECT_FALSE(model.parameters()[0].same_storage(copy.parameters()[0]));
    EXPECT_TRUE(copy.branch(0)[0].kernels.same_storage(copy.branch(1)[0].kernels));
}

TEST(AngleEstimateTest, SigmaIsAngleOverNinety) {
    EXPECT_DOUBLE_EQ(make_estimate(90.0).sigma_l, 1.0);
    EXPECT_NEAR(make_estimate(30.0).sigma_l, 0.3333333333, 1e-9);
}

TEST(ClassifyFrameTest, InclusiveThreshold) {
    EXPECT_EQ(classify_frame(make_estimate(29.9), 30.0), Label::kNormal);
    EXPECT_EQ(classify_frame(make_estimate(30.0), 30.0), Label::kAbnormal);
    EXPECT_THROW(classify_frame(make_estimate(10.0), 0.0), std::invalid_argument);
}

TEST(ClassifyFrameTest, LowerThresholdFlagsAtLeastAsMany) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> angle(0.0, 90.0);
    std::size_t at20 = 0, at30 = 0;
    for (int i = 0; i < 500; ++i) {
        const auto est = make_estimate(angle(rng));
        const bool flagged30 = classify_frame(est, 30.0) == Label::kAbnormal;
        const bool flagged20 = classify_frame(est, 20.0) == Label::kAbnormal;
        EXPECT_TRUE(!flagged30 || flagged20);
        at20 += flagged20;
        at30 += flagged30;
    }
    EXPECT_GT(at20, at30);
}

TEST(SplitTest, DeterministicDisjointCover) {
    std::vector<std::size_t> t1, v1, t2, v2;
    split_indices(100, 0.2, 5, t1, v1);
    split_indices(100, 0.2, 5, t2, v2);
    EXPECT_EQ(t1, t2);
    EXPECT_EQ(v1, v2);
    EXPECT_EQ(v1.size(), 20u);
    std::vector<std::size_t> all = t1;
    all.insert(all.end(), v1.begin(), v1.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
    EXPECT_THROW(split_indices(10, 1.0, 5, t1, v1), std::invalid_argument);
}

TEST(PretrainTest, EmptyCorpusRejected) {
    AngleNet model(small_config(), 1);
    EXPECT_THROW(pretrain(model, {}, {}), std::invalid_argument);
}

TEST(PretrainTest, ZeroAngleCorpusConverges) {
    std::vector<AnglePair> corpus;
    for (std::uint64_t s = 0; s < 40; ++s) {
        const Image f = scene_frame(100 + s);
        corpus.push_back({f, f, 0.0});
    }
    AngleNet model(small_config(), 3);
    TrainConfig config;
    config.epochs = 30;
    const auto report = pretrain(model, corpus, config);
    EXPECT_EQ(report.history.size(), 30u);
    EXPECT_EQ(report.validation_indices.size(), 8u);
    EXPECT_LE(report.best_validation_mae_deg, 1.0);
    EXPECT_NEAR(mean_absolute_error(model, corpus, report.validation_indices), report.best_validation_mae_deg, 1e-9);
}

TEST(SelfLabeledPairsTest, LabelsAndSameScenePairs) {
    std::vector<Image> frames = {scene_frame(1), scene_frame(2), scene_frame(3)};
    const auto pairs = make_self_labeled_pairs(frames, 200, 60.0, 0.25, 9);
    ASSERT_EQ(pairs.size(), 200u);
    std::size_t zeros = 0;
    for (const auto& p : pairs) {
        EXPECT_GE(p.angle_deg, 0.0);
        EXPECT_LE(p.angle_deg, 60.0);
        EXPECT_EQ(p.test.height, kFrameSize);
        zeros += p.angle_deg == 0.0;
    }
    EXPECT_GT(zeros, 25u);
    EXPECT_LT(zeros, 80u);
    EXPECT_EQ(pairs.front().test, make_self_labeled_pairs(frames, 200, 60.0, 0.25, 9).front().test);
    EXPECT_THROW(make_self_labeled_pairs({}, 5, 60.0, 0.25, 9), std::invalid_argument);
}

TEST(FinetuneTest, ZeroEpochsLeavesModelUnchanged) {
    AngleNet model(small_config(), 4);
    const auto before = flat_parameters(model);
    FinetuneConfig config;
    config.epochs = 0;
    finetune(model, {scene_frame(1)}, config);
    EXPECT_EQ(flat_parameters(model), before);
    EXPECT_THROW(finetune(model, {}, config), std::invalid_argument);
}

TEST(FinetuneTest, OutputStaysNonNegative) {
    AngleNet model(small_config(), 4);
    FinetuneConfig config;
    config.epochs = 1;
    config.pairs_per_epoch = 48;
    const std::vector<Image> frames = {scene_frame(1), scene_frame(2)};
    finetune(model, frames, config);
    for (const auto& p : make_self_labeled_pairs(frames, 20, 90.0, 0.2, 1)) {
        EXPECT_GE(model.estimate(p.reference, p.test).angle_deg, 0.0);
    }
}

TEST(AugmentPairTest, PreservesLabelAndRelation) {
    const Image a = scene_frame(5);
    const Image b = rotate_augment(SceneRenderer(5).render({}), 20.0);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 16; ++i) {
        const auto out = augment_pair({a, b, 20.0}, rng);
        EXPECT_EQ(out.angle_deg, 20.0);
        EXPECT_EQ(out.reference.size(), a.size());
    }
}
