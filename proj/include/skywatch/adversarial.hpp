#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "skywatch/anglenet.hpp"

namespace skywatch {

/// l-inf attack budget. epsilon = 0 is accepted as a no-op attack.
struct AttackConfig {
    double epsilon = 0.25;
    std::size_t iterations = 20;
    /// PGD step; 0 selects epsilon / 8.
    double step_size = 0.0;
    bool random_start = true;
    float clip_min = 0.0f;
    float clip_max = 1.0f;
    std::uint64_t seed = 17;

    double alpha() const { return step_size > 0.0 ? step_size : epsilon / 8.0; }
    void validate() const;
};

struct AdversarialSample {
    Image original;
    Image perturbed;
    std::string attack;
    double clean_angle_deg = 0.0;
    double adversarial_angle_deg = 0.0;
    /// Frame verdict at the threshold differs from the clean verdict.
    bool success = false;
};

/// Input-gradient access to a frozen copy of a model: parameters carry no
/// gradient, so crafting never touches the caller's model.
class AttackOracle {
   public:
    explicit AttackOracle(const AngleNet& model);

    /// Loss (prediction - true)^2 in output units; fills d loss / d test.
    double gradient(const Image& reference, const Image& test, double true_angle_deg, std::vector<float>& grad,
                    double* predicted_deg = nullptr) const;
    double predict(const Image& reference, const Image& test) const;
    const AngleNet& model() const { return model_; }

   private:
    AngleNet model_;
};

/// clip(x + step * sign(grad)) to [lo, hi]; sign(0) = 0. The float sum is
/// rounded toward x when needed, so |result - x| <= step holds exactly.
float signed_step(float x, float grad, float step, float lo, float hi);

/// Clips v to [lo, hi], then to [origin - eps, origin + eps].
float project_linf(float v, float origin, float eps, float lo, float hi);

/// Sees the PGD iterate after the random start (iteration 0, if enabled) and
/// after every step k (iteration k).
using PgdObserver = std::function<void(std::size_t iteration, const Image& x)>;

/// perturbed = clip(test + eps * sign(grad)). Untargeted: maximizes squared
/// angle error. Only the test frame changes.
AdversarialSample fgsm(const AngleNet& model, const Image& reference, const Image& test, double true_angle_deg,
                       const AttackConfig& config, double threshold_deg = 30.0);
AdversarialSample fgsm(const AttackOracle& oracle, const Image& reference, const Image& test, double true_angle_deg,
                       const AttackConfig& config, double threshold_deg = 30.0);

/// Iterated signed steps of size alpha, each followed by clipping and
/// projection onto the eps-ball around `test`. `stream` selects the random
/// start sequence (derived from config.seed).
AdversarialSample pgd(const AngleNet& model, const Image& reference, const Image& test, double true_angle_deg,
                      const AttackConfig& config, double threshold_deg = 30.0, std::uint64_t stream = 0,
                      const PgdObserver& observer = {});
AdversarialSample pgd(const AttackOracle& oracle, const Image& reference, const Image& test, double true_angle_deg,
                      const AttackConfig& config, double threshold_deg = 30.0, std::uint64_t stream = 0,
                      const PgdObserver& observer = {});

struct UniversalPerturbation {
    Image delta;
    double epsilon = 0.0;
    double fooling_rate = 0.0;
    std::size_t passes = 0;
};

/// test + delta, clipped.
Image apply_perturbation(const Image& image, const Image& delta, float clip_min = 0.0f, float clip_max = 1.0f);

/// Greedy accumulation: for every pair not yet fooled, one signed step on
/// delta from the input gradient, then projection to ||delta||_inf <= eps.
/// Stops when the fooling rate reaches `target_fooling_rate` or after
/// `max_passes`.
UniversalPerturbation craft_uap(const AngleNet& model, const std::vector<AnglePair>& pairs, const AttackConfig& config,
                                std::size_t max_passes = 5, double target_fooling_rate = 0.8,
                                double threshold_deg = 30.0);

/// Uniform random +-eps sign noise (the UAP comparison baseline).
Image random_sign_perturbation(std::size_t channels, std::size_t height, std::size_t width, double epsilon,
                               std::uint64_t seed);

/// Fraction of pairs whose frame verdict flips under `delta`.
double fooling_rate(const AngleNet& model, const std::vector<AnglePair>& pairs, const Image& delta,
                    double threshold_deg = 30.0);

enum class PatchKind { kCheckerboard, kNoise, kSolid, kStripes, kRings };
inline constexpr PatchKind kAllPatchKinds[] = {PatchKind::kCheckerboard, PatchKind::kNoise, PatchKind::kSolid,
                                              PatchKind::kStripes, PatchKind::kRings};
std::string to_string(PatchKind kind);

Image make_patch(PatchKind kind, std::size_t size, std::size_t channels = 1, std::uint64_t seed = 0);

/// Opaque (opacity 1) or blended overlay with the patch's top-left corner at
/// (y, x). Rejects positions where the patch does not fit.
Image apply_patch(const Image& image, const Image& patch, std::size_t y, std::size_t x, double opacity = 1.0);

/// Patch of kind (stream % 5) at a position drawn from (seed, stream).
Image random_patch_overlay(const Image& image, std::size_t patch_size, std::uint64_t seed, std::uint64_t stream);

enum class AttackKind { kNone, kFgsm, kPgd, kUap, kPatch };
std::string to_string(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name);

struct AttackSpec {
    AttackKind kind = AttackKind::kPgd;
    AttackConfig config;
    /// UAP: use this perturbation; otherwise one is crafted on the set.
    std::optional<Image> universal;
    std::size_t uap_passes = 5;
    std::size_t patch_size = 16;
};

struct AttackReport {
    std::string attack;
    std::size_t samples = 0;
    double clean_accuracy = 0.0;
    double attacked_accuracy = 0.0;
    /// Share of originally-correct frames whose verdict flipped.
    double success_rate = 0.0;
    std::size_t originally_correct = 0;
    std::size_t flipped_correct = 0;
    double max_linf = 0.0;
};

/// Frame truth is (pair angle >= threshold). Reproducible for a fixed seed.
AttackReport evaluate_attack(const AngleNet& model, const std::vector<AnglePair>& pairs, const AttackSpec& spec,
                             double threshold_deg = 30.0);

struct AdversarialTrainConfig {
    std::size_t epochs = 6;
    std::size_t batch_size = 16;
    /// Share of every batch replaced by crafted samples, in (0, 1].
    double mix_ratio = 0.5;
    /// Attacks cycled over the crafted samples (kFgsm, kPgd, kPatch).
    std::vector<AttackKind> attacks = {AttackKind::kPgd, AttackKind::kPatch};
    AttackConfig attack{0.25, 5, 0.0, true, 0.0f, 1.0f, 23};
    std::size_t patch_size = 16;
    OptimizerConfig optimizer{OptimizerKind::kAdam, 3e-4};
    /// Craft against the live model every batch (true) or against a snapshot
    /// taken at the start of each epoch (false).
    bool per_batch = true;
    std::uint64_t seed = 29;

    void validate() const;
};

struct AdversarialTrainReport {
    std::vector<double> epoch_loss;
    std::optional<AttackReport> pgd_before, pgd_after;
    double clean_accuracy_before = 0.0;
    double clean_accuracy_after = 0.0;
};

/// Retrains `model` in place on clean pairs mixed with samples crafted
/// against the current weights. With `eval`, also reports clean and PGD
/// accuracy before and after.
AdversarialTrainReport adversarial_train(AngleNet& model, const std::vector<AnglePair>& corpus,
                                         const AdversarialTrainConfig& config,
                                         const std::vector<AnglePair>* eval = nullptr,
                                         const AttackConfig& eval_attack = {}, double threshold_deg = 30.0);

}  // namespace skywatch
