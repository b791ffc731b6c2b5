#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

#include "skywatch/anglenet.hpp"
#include "skywatch/corpus.hpp"
#include "skywatch/image.hpp"
#include "skywatch/imu.hpp"

namespace skywatch {

/// Side of the procedurally rendered base scene before rotate-crop-resize.
inline constexpr std::size_t kSceneSize = 128;

struct SceneOptions {
    bool include_object = true;
    std::size_t clutter_shapes = 5;
};

/// Textured ground (smooth shading, a road band, high-contrast clutter shapes)
/// plus a distinct tracked object near the center.
class SceneRenderer {
   public:
    explicit SceneRenderer(std::uint64_t seed);

    /// Deterministic for a given seed and options; the object can be toggled
    /// without changing the rest of the scene.
    Image render(const SceneOptions& options) const;

   private:
    struct Shape {
        int kind;  // 0 rectangle, 1 ellipse, 2 triangle
        double cx, cy, a, b, angle;
        float value;
    };
    std::uint64_t seed_;
    double base_level_, road_level_, dash_level_;
    double wave_amp_[2], wave_fx_[2], wave_fy_[2], wave_phase_[2];
    double road_angle_, road_offset_, road_width_;
    std::vector<Shape> clutter_;
    Shape object_body_, object_stripe_;
};

/// Adds zero-mean Gaussian pixel noise and clamps to [0,1].
void add_pixel_noise(Image& image, double sigma, std::mt19937_64& rng);

struct ShapesCorpusConfig {
    std::size_t pairs = 5000;
    /// Distinct base scenes; pairs cycle through them.
    std::size_t scenes = 1000;
    double max_angle_deg = 90.0;
    double reference_jitter_deg = 3.0;
    double pixel_noise = 0.01;
    /// Share of pairs built from a captured frame (rotate_captured), matching
    /// the self-labeled pairs used for fine-tuning.
    double captured_fraction = 0.5;
    std::uint64_t seed = 11;
};

/// Rotation-augmented pairs over random scenes, labeled with the relative angle.
std::vector<AnglePair> make_shapes_corpus(const ShapesCorpusConfig& config);

/// Deterministic IMU generator. Normal samples follow one shared hover-sway
/// oscillation, so every channel is a near-linear function of a single phase
/// plus small noise. Abnormal samples give each latent axis its own random
/// phase and scale amplitude and noise by sqrt(multiplier), which multiplies
/// every channel's variance by the multiplier and breaks the cross-channel
/// correlation.
class ImuSimulator {
   public:
    ImuSimulator(double noise_scale, std::uint64_t seed);

    std::pair<ImuDataSample, ImuMagSample> sample(double t, bool abnormal, double variance_multiplier);

   private:
    std::mt19937_64 rng_;
    double noise_scale_;
    double phase0_;
    double envelope_phase_;
};

struct ImuDataset {
    std::vector<ImuDataSample> data;
    std::vector<ImuMagSample> mag;
    std::vector<Label> labels;
};

/// IMU-only labeled stream of `count` timestamps with abnormal runs covering
/// `anomaly_fraction` of them (same run construction as the full corpus).
ImuDataset make_imu_dataset(std::size_t count, double anomaly_fraction, double variance_multiplier,
                            double noise_scale, std::uint64_t seed, double interval_s = 0.1);

/// Exactly round(fraction * count) abnormal positions, grouped in contiguous
/// runs of mean length `run_length`. Position 0 is always normal when any
/// normal frame exists.
std::vector<bool> make_anomaly_schedule(std::size_t count, double fraction, double run_length, std::mt19937_64& rng);

struct SyntheticCorpusConfig {
    std::size_t frames = 669;
    double anomaly_fraction = 0.37;
    double normal_jitter_deg = 3.0;
    double abnormal_min_deg = 30.0;
    double abnormal_max_deg = 90.0;
    double object_removal_probability = 0.3;
    double imu_noise_scale = 1.0;
    double imu_variance_multiplier = 4.0;
    /// Mean length of contiguous abnormal runs, in frames.
    double anomaly_run_length = 6.0;
    double frame_interval_s = 0.1;
    /// Share of frame intervals that get an extra IMU record halfway between
    /// frames (IMU streams run faster than the camera).
    double extra_imu_fraction = 0.475;
    double pixel_noise = 0.01;
    /// The monitored scene; shared by the training and evaluation corpora.
    std::uint64_t scene_seed = 5;
    std::uint64_t seed = 7;

    void validate(double threshold_deg = 30.0) const;
};

/// Renders frames to <dir>/frames/*.pgm and writes <dir>/manifest.txt with
/// labels and rotation ground truth. Returns the manifest as written.
CorpusManifest generate_synthetic_corpus(const SyntheticCorpusConfig& config, const std::filesystem::path& dir);

}  // namespace skywatch
