#include "skywatch/imu.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace skywatch {

std::vector<double> ImuDataSample::features() const {
    std::vector<double> out;
    out.reserve(kImuDataWidth);
    out.insert(out.end(), orientation.begin(), orientation.end());
    out.insert(out.end(), angular_velocity.begin(), angular_velocity.end());
    out.insert(out.end(), linear_acceleration.begin(), linear_acceleration.end());
    return out;
}

std::vector<double> ImuMagSample::features() const { return {field.begin(), field.end()}; }

void normalize_orientation(ImuDataSample& sample) {
    double norm = 0.0;
    for (double q : sample.orientation) norm += q * q;
    norm = std::sqrt(norm);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-3) {
        throw std::invalid_argument("orientation quaternion norm " + std::to_string(norm) + " is not within 1 +/- 1e-3");
    }
    for (double& q : sample.orientation) q /= norm;
}

Normalizer::Normalizer(std::vector<double> min, std::vector<double> max) : min_(std::move(min)), max_(std::move(max)) {
    if (min_.size() != max_.size()) throw std::invalid_argument("normalizer min/max widths differ");
    for (std::size_t c = 0; c < min_.size(); ++c) {
        if (!(max_[c] > min_[c])) throw std::invalid_argument("normalizer channel " + std::to_string(c) + " has max <= min");
    }
}

Normalizer Normalizer::fit(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("normalizer needs at least two samples");
    const std::size_t width = samples.front().size();
    if (width == 0) throw std::invalid_argument("normalizer samples are empty");
    std::vector<double> lo(width, std::numeric_limits<double>::infinity());
    std::vector<double> hi(width, -std::numeric_limits<double>::infinity());
    for (const auto& s : samples) {
        if (s.size() != width) throw std::invalid_argument("normalizer samples have inconsistent widths");
        for (std::size_t c = 0; c < width; ++c) {
            if (!std::isfinite(s[c])) throw std::invalid_argument("normalizer sample is not finite");
            lo[c] = std::min(lo[c], s[c]);
            hi[c] = std::max(hi[c], s[c]);
        }
    }
    for (std::size_t c = 0; c < width; ++c) {
        if (!(hi[c] > lo[c])) hi[c] = lo[c] + 1.0;
    }
    return Normalizer(std::move(lo), std::move(hi));
}

double Normalizer::apply(std::size_t channel, double value) const {
    return (value - min_.at(channel)) / (max_[channel] - min_[channel]);
}

std::vector<float> Normalizer::apply(std::span<const double> values) const {
    if (values.size() != width()) {
        throw std::invalid_argument("normalizer expects " + std::to_string(width()) + " channels, got " +
                                    std::to_string(values.size()));
    }
    std::vector<float> out(values.size());
    for (std::size_t c = 0; c < values.size(); ++c) out[c] = static_cast<float>(apply(c, values[c]));
    return out;
}

void AutoencoderConfig::validate() const {
    if (input == 0) throw std::invalid_argument("autoencoder input width must be positive");
    if (bottleneck == 0 || bottleneck >= input) {
        throw std::invalid_argument("autoencoder bottleneck must be in [1, input)");
    }
    for (auto w : encoder) {
        if (w == 0) throw std::invalid_argument("autoencoder hidden widths must be positive");
    }
}

Autoencoder::Autoencoder(const AutoencoderConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::vector<std::size_t> widths{config_.input};
    widths.insert(widths.end(), config_.encoder.begin(), config_.encoder.end());
    widths.push_back(config_.bottleneck);
    widths.insert(widths.end(), config_.encoder.rbegin(), config_.encoder.rend());
    widths.push_back(config_.input);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t in = widths[i], out = widths[i + 1];
        std::normal_distribution<float> dist(0.0f, std::sqrt(1.0f / static_cast<float>(in)));
        std::vector<float> w(out * in);
        for (auto& v : w) v = dist(rng);
        layers_.push_back({Tensor::from({out, in}, std::move(w), true), Tensor::zeros({out}, true)});
    }
}

Tensor Autoencoder::forward(Tape& tape, const Tensor& input) const {
    if (input.shape() != Shape{config_.input}) {
        throw ShapeError("autoencoder expects input [" + std::to_string(config_.input) + "], got " +
                         shape_to_string(input.shape()));
    }
    Tensor x = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = ops::dense(tape, x, layers_[i].weights, layers_[i].bias);
        if (i + 1 < layers_.size()) x = ops::tanh(tape, x);
    }
    return x;
}

std::vector<float> Autoencoder::reconstruct(std::span<const float> input) const {
    Tape tape(GradMode::kNoGrad);
    const Tensor out = forward(tape, Tensor::from({input.size()}, {input.begin(), input.end()}));
    return {out.data().begin(), out.data().end()};
}

std::vector<Tensor> Autoencoder::parameters() const {
    std::vector<Tensor> params;
    for (const auto& layer : layers_) {
        params.push_back(layer.weights);
        params.push_back(layer.bias);
    }
    return params;
}

double reconstruction_mse(std::span<const float> input, std::span<const float> reconstruction) {
    if (input.size() != reconstruction.size() || input.empty()) {
        throw std::invalid_argument("reconstruction length mismatch: " + std::to_string(input.size()) + " vs " +
                                    std::to_string(reconstruction.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double d = static_cast<double>(input[i]) - static_cast<double>(reconstruction[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(input.size());
}

LossPair reconstruction_losses(const Autoencoder& data_model, const Autoencoder& mag_model,
                               std::span<const float> data, std::span<const float> mag) {
    if (data.size() != data_model.config().input || mag.size() != mag_model.config().input) {
        throw std::invalid_argument("sample widths (" + std::to_string(data.size()) + ", " +
                                    std::to_string(mag.size()) + ") do not match the autoencoders (" +
                                    std::to_string(data_model.config().input) + ", " +
                                    std::to_string(mag_model.config().input) + ")");
    }
    return {reconstruction_mse(data, data_model.reconstruct(data)), reconstruction_mse(mag, mag_model.reconstruct(mag))};
}

double sigma_data(double data_loss, const Calibration& calibration) {
    if (!(calibration.max_data_loss > 0.0)) throw std::invalid_argument("degenerate calibration: L_max,data is zero");
    return data_loss / calibration.max_data_loss;
}

double sigma_mag(double mag_loss, const Calibration& calibration) {
    if (!(calibration.max_mag_loss > 0.0)) throw std::invalid_argument("degenerate calibration: L_max,mag is zero");
    return mag_loss / calibration.max_mag_loss;
}

Calibration calibrate(const Autoencoder& data_model, const Autoencoder& mag_model,
                      const std::vector<std::vector<float>>& data_samples,
                      const std::vector<std::vector<float>>& mag_samples) {
    if (data_samples.size() != mag_samples.size()) {
        throw std::invalid_argument("misaligned IMU sample counts: " + std::to_string(data_samples.size()) +
                                    " data vs " + std::to_string(mag_samples.size()) + " mag");
    }
    Calibration cal;
    for (std::size_t i = 0; i < data_samples.size(); ++i) {
        const auto l = reconstruction_losses(data_model, mag_model, data_samples[i], mag_samples[i]);
        cal.max_data_loss = std::max(cal.max_data_loss, l.data);
        cal.max_mag_loss = std::max(cal.max_mag_loss, l.mag);
    }
    return cal;
}

ImuTrainReport train_joint(Autoencoder& data_model, Autoencoder& mag_model,
                           const std::vector<std::vector<float>>& data_samples,
                           const std::vector<std::vector<float>>& mag_samples, const ImuTrainConfig& config) {
    if (data_samples.size() != mag_samples.size()) {
        throw std::invalid_argument("misaligned IMU sample counts: " + std::to_string(data_samples.size()) +
                                    " data vs " + std::to_string(mag_samples.size()) + " mag");
    }
    if (data_samples.empty()) throw std::invalid_argument("no IMU samples to train on");
    if (config.batch_size == 0) throw std::invalid_argument("batch size must be positive");
    auto params = data_model.parameters();
    for (const auto& p : mag_model.parameters()) params.push_back(p);
    Optimizer optimizer(params, config.optimizer);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data_samples.size());
    std::iota(order.begin(), order.end(), 0);

    ImuTrainReport report;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const float weight = 1.0f / static_cast<float>(end - start);
            optimizer.zero_grad();
            for (std::size_t k = start; k < end; ++k) {
                const auto& d = data_samples[order[k]];
                const auto& m = mag_samples[order[k]];
                Tape tape;
                const Tensor xd = Tensor::from({d.size()}, d);
                const Tensor xm = Tensor::from({m.size()}, m);
                const Tensor l1 = ops::mse(tape, data_model.forward(tape, xd), xd);
                const Tensor l2 = ops::mse(tape, mag_model.forward(tape, xm), xm);
                const Tensor loss = ops::add(tape, l1, l2);
                total += loss.item();
                tape.backward(ops::scale(tape, loss, weight));
            }
            optimizer.step();
        }
        report.epoch_loss.push_back(total / static_cast<double>(order.size()));
        optimizer.set_learning_rate(optimizer.learning_rate() * config.lr_decay);
    }
    report.calibration = calibrate(data_model, mag_model, data_samples, mag_samples);
    return report;
}

LossPair ImuDetector::losses(const ImuDataSample& data, const ImuMagSample& mag) const {
    const auto d = data_normalizer.apply(data.features());
    const auto m = mag_normalizer.apply(mag.features());
    return reconstruction_losses(data_model, mag_model, d, m);
}

}  // namespace skywatch
