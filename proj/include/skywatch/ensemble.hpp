#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "skywatch/anglenet.hpp"
#include "skywatch/corpus.hpp"
#include "skywatch/imu.hpp"

namespace skywatch {

struct EnsembleWeights {
    double w_d = 1.0;   // IMU/data
    double w_m = 0.9;   // IMU/mag
    double w_l = 0.75;  // image

    void validate() const;
    double total() const { return w_d + w_m + w_l; }
};

struct AnomalyScores {
    double timestamp = 0.0;
    double sigma_d = 0.0;
    double sigma_m = 0.0;
    double sigma_l = 0.0;
    double n = 0.0;
};

struct Verdict {
    Label label = Label::kNormal;
    double n = 0.0;
    double threshold = 1.0;
};

/// N = w_d*sigma_d + w_m*sigma_m + w_l*sigma_l. Negative scores are rejected.
double combine(double sigma_d, double sigma_m, double sigma_l, const EnsembleWeights& weights = {});

/// abnormal iff n >= threshold.
Verdict classify(double n, double threshold = 1.0);

/// Frozen models used for scoring; both must outlive the call.
struct Detector {
    const AngleNet* angle = nullptr;
    const ImuDetector* imu = nullptr;
};

struct StreamOptions {
    EnsembleWeights weights;
    double threshold = 1.0;
    /// Overrides the reference frame. Default: first frame labeled normal,
    /// else the first frame in timestamp order.
    std::optional<Image> reference;
    /// Missing modalities contribute nothing and the threshold is scaled by
    /// (present weight) / (total weight). Strict mode rejects them.
    bool lenient = false;
    /// 0 picks the hardware concurrency. Results do not depend on it.
    std::size_t threads = 0;
};

struct ScoredSample {
    AnomalyScores scores;
    Verdict verdict;
    std::optional<Label> truth;
};

/// Index of the frame used as reference under the default policy.
std::size_t default_reference_index(const std::vector<AlignedSample>& samples);

/// One record per sample, sorted by timestamp.
std::vector<ScoredSample> score_stream(const std::vector<AlignedSample>& samples, const Detector& detector,
                                       const StreamOptions& options = {});

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Each index runs exactly once; fn must only write state owned
/// by index i.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace skywatch
