#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "skywatch/image.hpp"
#include "skywatch/optimizer.hpp"
#include "skywatch/tensor.hpp"
#include "skywatch/types.hpp"

namespace skywatch {

/// Degrees represented by one unit of the network output; sigma_l = angle / 90.
inline constexpr double kAngleUnitDeg = 90.0;

struct AngleNetConfig {
    std::size_t input_size = kFrameSize;
    std::size_t channels = 1;
    std::vector<std::size_t> branch_widths = {8, 16, 32};
    std::size_t fusion_width = 32;
    std::array<std::size_t, 2> hidden = {128, 32};
    std::size_t kernel_size = 3;
    double threshold_deg = 30.0;

    void validate() const;
    bool operator==(const AngleNetConfig&) const = default;
};

struct ConvLayer {
    Tensor kernels;
    Tensor bias;
};

struct DenseLayer {
    Tensor weights;
    Tensor bias;
};

struct AngleEstimate {
    double angle_deg = 0.0;
    double sigma_l = 0.0;
};

AngleEstimate make_estimate(double angle_deg);

/// Two-branch (Siamese) angle regressor. Both branches run the same conv
/// stack; branch(0) and branch(1) hold aliasing handles to one set of weights.
class AngleNet {
   public:
    AngleNet(const AngleNetConfig& config, std::uint64_t seed);

    const AngleNetConfig& config() const { return config_; }

    /// Output in units of kAngleUnitDeg (i.e. sigma_l), shape [1], >= 0.
    Tensor forward(Tape& tape, const Tensor& reference, const Tensor& test) const;
    AngleEstimate estimate(const Image& reference, const Image& test) const;

    const std::vector<ConvLayer>& branch(std::size_t index) const { return branches_.at(index); }
    std::vector<Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
    /// Deep copy with independent storage (the copy keeps its own aliasing).
    AngleNet clone() const;
    /// Copies values from `other` (same config) into this model's tensors.
    void assign_from(const AngleNet& other);

    void check_input(const Image& image, const char* role) const;

   private:
    AngleNetConfig config_;
    std::array<std::vector<ConvLayer>, 2> branches_;
    ConvLayer fusion_;
    DenseLayer hidden1_;
    DenseLayer hidden2_;
    DenseLayer head_;
};

struct AnglePair {
    Image reference;
    Image test;
    double angle_deg = 0.0;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double validation_fraction = 0.2;
    OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-3};
    /// Multiplies the learning rate after every epoch.
    double lr_decay = 0.92;
    /// Label-preserving pair symmetries during training: swap the two
    /// images, mirror both, or turn both by the same quarter turn.
    bool symmetry_augment = true;
    std::uint64_t seed = 1;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_mae_deg = 0.0;
};

struct TrainReport {
    double best_validation_mae_deg = 0.0;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> validation_indices;
};

/// Deterministic 80/20-style partition of [0, count).
void split_indices(std::size_t count, double validation_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& validation);

/// Mean absolute angle error in degrees over the selected pairs.
double mean_absolute_error(const AngleNet& model, const std::vector<AnglePair>& pairs,
                           const std::vector<std::size_t>& indices);

/// MSE regression on angle/90. Keeps the parameters with the lowest
/// validation MAE seen across epochs.
TrainReport pretrain(AngleNet& model, const std::vector<AnglePair>& corpus, const TrainConfig& config);

struct FinetuneConfig {
    std::size_t epochs = 2;
    std::size_t pairs_per_epoch = 800;
    std::size_t batch_size = 16;
    OptimizerConfig optimizer{OptimizerKind::kAdam, 2e-4};
    double max_angle_deg = 90.0;
    /// Share of pairs built from two distinct normal frames (label 0).
    double same_scene_fraction = 0.2;
    double reference_jitter_deg = 3.0;
    bool symmetry_augment = true;
    std::uint64_t seed = 2;
};

/// Self-labeled pairs from normal frames only: (augment(f,phi),
/// augment(f,phi+-theta)) labeled theta, and (f_i, f_j) labeled 0. The
/// reference jitter phi sends both views through the same resampling path.
std::vector<AnglePair> make_self_labeled_pairs(const std::vector<Image>& normal_frames, std::size_t count,
                                               double max_angle_deg, double same_scene_fraction,
                                               std::uint64_t seed, double reference_jitter_deg = 3.0);

double finetune(AngleNet& model, const std::vector<Image>& normal_frames, const FinetuneConfig& config);

/// Applies a random label-preserving symmetry to a pair (swap, mirror,
/// common quarter turn).
AnglePair augment_pair(const AnglePair& pair, std::mt19937_64& rng);

/// One optimization pass over `pairs` in the given order; returns mean loss.
/// With `augment_rng`, every pair goes through augment_pair first.
double train_epoch(AngleNet& model, Optimizer& optimizer, const std::vector<AnglePair>& pairs,
                   const std::vector<std::size_t>& order, std::size_t batch_size,
                   std::mt19937_64* augment_rng = nullptr);

/// abnormal iff angle >= threshold.
Label classify_frame(const AngleEstimate& estimate, double threshold_deg);

}  // namespace skywatch
