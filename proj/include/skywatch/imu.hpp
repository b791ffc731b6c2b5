#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "skywatch/optimizer.hpp"
#include "skywatch/tensor.hpp"

namespace skywatch {

inline constexpr std::size_t kImuDataWidth = 10;
inline constexpr std::size_t kImuMagWidth = 3;

/// Orientation (w, x, y, z), angular velocity in rad/s, linear acceleration in m/s^2.
struct ImuDataSample {
    double timestamp = 0.0;
    std::array<double, 4> orientation{1.0, 0.0, 0.0, 0.0};
    std::array<double, 3> angular_velocity{};
    std::array<double, 3> linear_acceleration{};

    std::vector<double> features() const;
    bool operator==(const ImuDataSample&) const = default;
};

/// Raw magnetometer reading.
struct ImuMagSample {
    double timestamp = 0.0;
    std::array<double, 3> field{};

    std::vector<double> features() const;
    bool operator==(const ImuMagSample&) const = default;
};

/// Rejects a quaternion whose norm is off by more than 1e-3, then renormalizes.
void normalize_orientation(ImuDataSample& sample);

/// Per-channel min-max scaling learned from normal data. No clipping: values
/// outside the training range map outside [0,1].
class Normalizer {
   public:
    Normalizer() = default;
    Normalizer(std::vector<double> min, std::vector<double> max);

    /// Needs at least two samples of equal width. Constant channels get
    /// max = min + 1.
    static Normalizer fit(const std::vector<std::vector<double>>& samples);

    std::vector<float> apply(std::span<const double> values) const;
    double apply(std::size_t channel, double value) const;

    std::size_t width() const { return min_.size(); }
    const std::vector<double>& min() const { return min_; }
    const std::vector<double>& max() const { return max_; }
    bool operator==(const Normalizer&) const = default;

   private:
    std::vector<double> min_;
    std::vector<double> max_;
};

struct AutoencoderConfig {
    std::size_t input = kImuDataWidth;
    /// Encoder hidden widths; the decoder mirrors them.
    std::vector<std::size_t> encoder = {8};
    std::size_t bottleneck = 4;

    void validate() const;
    bool operator==(const AutoencoderConfig&) const = default;

    static AutoencoderConfig imu_data() { return {kImuDataWidth, {8}, 4}; }
    static AutoencoderConfig imu_mag() { return {kImuMagWidth, {4}, 2}; }
};

/// Dense autoencoder, tanh hidden layers, linear output.
class Autoencoder {
   public:
    Autoencoder(const AutoencoderConfig& config, std::uint64_t seed);

    const AutoencoderConfig& config() const { return config_; }
    Tensor forward(Tape& tape, const Tensor& input) const;
    std::vector<float> reconstruct(std::span<const float> input) const;
    std::vector<Tensor> parameters() const;

   private:
    struct Layer {
        Tensor weights;
        Tensor bias;
    };
    AutoencoderConfig config_;
    std::vector<Layer> layers_;
};

struct LossPair {
    double data = 0.0;  // L1, IMU/data reconstruction MSE
    double mag = 0.0;   // L2, IMU/mag reconstruction MSE
};

struct Calibration {
    double max_data_loss = 0.0;
    double max_mag_loss = 0.0;
    bool operator==(const Calibration&) const = default;
};

double reconstruction_mse(std::span<const float> input, std::span<const float> reconstruction);

/// Per-sample losses on already-normalized vectors. Read-only.
LossPair reconstruction_losses(const Autoencoder& data_model, const Autoencoder& mag_model,
                               std::span<const float> data, std::span<const float> mag);

/// sigma_d = L1 / L_max,data.
double sigma_data(double data_loss, const Calibration& calibration);
/// sigma_m = L2 / L_max,mag.
double sigma_mag(double mag_loss, const Calibration& calibration);

struct ImuTrainConfig {
    std::size_t epochs = 300;
    std::size_t batch_size = 16;
    OptimizerConfig optimizer{OptimizerKind::kAdam, 3e-3};
    double lr_decay = 0.995;
    std::uint64_t seed = 3;
};

struct ImuTrainReport {
    Calibration calibration;
    std::vector<double> epoch_loss;  // mean L1 + L2 per epoch
};

/// Trains both autoencoders from the summed loss L1 + L2 on normalized normal
/// samples, then calibrates from one pass over the same samples.
ImuTrainReport train_joint(Autoencoder& data_model, Autoencoder& mag_model,
                           const std::vector<std::vector<float>>& data_samples,
                           const std::vector<std::vector<float>>& mag_samples, const ImuTrainConfig& config);

Calibration calibrate(const Autoencoder& data_model, const Autoencoder& mag_model,
                      const std::vector<std::vector<float>>& data_samples,
                      const std::vector<std::vector<float>>& mag_samples);

/// Trained IMU path: normalizers, both autoencoders and their calibration.
struct ImuDetector {
    Normalizer data_normalizer;
    Normalizer mag_normalizer;
    Autoencoder data_model{AutoencoderConfig::imu_data(), 0};
    Autoencoder mag_model{AutoencoderConfig::imu_mag(), 0};
    Calibration calibration;

    LossPair losses(const ImuDataSample& data, const ImuMagSample& mag) const;
};

}  // namespace skywatch
