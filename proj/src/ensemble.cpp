#include "skywatch/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace skywatch {

void EnsembleWeights::validate() const {
    if (w_d < 0.0 || w_m < 0.0 || w_l < 0.0) throw std::invalid_argument("ensemble weights must be >= 0");
    if (!(total() > 0.0)) throw std::invalid_argument("ensemble weights must not all be zero");
}

double combine(double sigma_d, double sigma_m, double sigma_l, const EnsembleWeights& weights) {
    if (sigma_d < 0.0 || sigma_m < 0.0 || sigma_l < 0.0) {
        throw std::invalid_argument("negative anomaly score (" + std::to_string(sigma_d) + ", " +
                                    std::to_string(sigma_m) + ", " + std::to_string(sigma_l) + ")");
    }
    return weights.w_d * sigma_d + weights.w_m * sigma_m + weights.w_l * sigma_l;
}

Verdict classify(double n, double threshold) {
    if (!(threshold > 0.0)) throw std::invalid_argument("ensemble threshold must be positive");
    return {n >= threshold ? Label::kAbnormal : Label::kNormal, n, threshold};
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::size_t default_reference_index(const std::vector<AlignedSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("empty stream has no reference frame");
    std::size_t first = 0;
    std::optional<std::size_t> first_normal;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].timestamp < samples[first].timestamp) first = i;
        if (samples[i].label == Label::kNormal &&
            (!first_normal || samples[i].timestamp < samples[*first_normal].timestamp)) {
            first_normal = i;
        }
    }
    return first_normal.value_or(first);
}

std::vector<ScoredSample> score_stream(const std::vector<AlignedSample>& samples, const Detector& detector,
                                       const StreamOptions& options) {
    if (!detector.angle || !detector.imu) throw std::invalid_argument("detector needs both AngleNet and IMU models");
    options.weights.validate();
    if (!(options.threshold > 0.0)) throw std::invalid_argument("ensemble threshold must be positive");
    if (samples.empty()) return {};

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return samples[a].timestamp < samples[b].timestamp; });

    if (!options.lenient) {
        for (auto i : order) {
            if (!samples[i].data || !samples[i].mag) {
                throw std::invalid_argument("sample at t=" + std::to_string(samples[i].timestamp) +
                                            " is missing an IMU modality (strict mode)");
            }
        }
    }
    const Image& reference = options.reference ? *options.reference : samples[default_reference_index(samples)].image;
    detector.angle->check_input(reference, "reference");

    std::vector<ScoredSample> out(samples.size());
    parallel_for(order.size(), options.threads, [&](std::size_t k) {
        const AlignedSample& s = samples[order[k]];
        const auto& w = options.weights;
        AnomalyScores scores;
        scores.timestamp = s.timestamp;
        double present = w.w_l;
        scores.sigma_l = detector.angle->estimate(reference, s.image).sigma_l;
        if (s.data) {
            const auto d = detector.imu->data_normalizer.apply(s.data->features());
            scores.sigma_d = sigma_data(reconstruction_mse(d, detector.imu->data_model.reconstruct(d)),
                                        detector.imu->calibration);
            present += w.w_d;
        }
        if (s.mag) {
            const auto m = detector.imu->mag_normalizer.apply(s.mag->features());
            scores.sigma_m = sigma_mag(reconstruction_mse(m, detector.imu->mag_model.reconstruct(m)),
                                       detector.imu->calibration);
            present += w.w_m;
        }
        scores.n = combine(scores.sigma_d, scores.sigma_m, scores.sigma_l, w);
        const double threshold = options.lenient ? options.threshold * present / w.total() : options.threshold;
        out[k] = {scores, classify(scores.n, threshold), s.label};
    });
    return out;
}

}  // namespace skywatch
