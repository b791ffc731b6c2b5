#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "skywatch/adversarial.hpp"
#include "skywatch/anglenet.hpp"
#include "skywatch/ensemble.hpp"
#include "skywatch/imu.hpp"
#include "skywatch/metrics.hpp"
#include "skywatch/synthetic.hpp"

namespace skywatch {

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct DataSection {
    SyntheticCorpusConfig eval;
    /// Normal-only training corpus; shares the scene with `eval`.
    std::size_t train_frames = 1000;
    std::uint64_t train_seed = 8;
};

struct AttackSection {
    AttackConfig config;
    std::size_t uap_passes = 5;
    std::size_t patch_size = 16;
    /// Frames of the evaluation corpus used for attack reports (evenly
    /// spaced); 0 uses all.
    std::size_t eval_frames = 200;
};

struct DefenseSection {
    AdversarialTrainConfig train;
    /// Self-labeled pairs built from training-corpus normal frames.
    std::size_t pairs = 1600;
    double max_angle_deg = 90.0;
    double same_scene_fraction = 0.2;
};

struct EnsembleSection {
    EnsembleWeights weights;
    double threshold = 1.0;
    bool lenient = false;
    std::size_t threads = 0;
    double alignment_tolerance_s = 0.05;
};

/// One declarative file drives every subcommand. Unknown keys are rejected.
struct RunConfig {
    /// Mixed into every component seed; 0 leaves them as configured.
    std::uint64_t seed = 0;
    std::filesystem::path work_dir = "skywatch-run";
    DataSection data;
    ShapesCorpusConfig shapes;
    AngleNetConfig anglenet;
    std::uint64_t anglenet_seed = 3;
    TrainConfig pretrain;
    FinetuneConfig finetune;
    ImuTrainConfig imu;
    std::uint64_t imu_init_seed = 11;
    EnsembleSection ensemble;
    AttackSection attack;
    DefenseSection defense;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    /// Component seeds after mixing in the master seed.
    RunConfig resolved() const;
    void validate() const;
};

struct RunPaths {
    std::filesystem::path root;
    std::filesystem::path train_corpus() const { return root / "data" / "train"; }
    std::filesystem::path eval_corpus() const { return root / "data" / "eval"; }
    std::filesystem::path anglenet_model() const { return root / "models" / "anglenet.skw"; }
    /// AngleNet after pretraining, before finetuning on the training corpus.
    std::filesystem::path pretrained_model() const { return root / "models" / "anglenet_pretrained.skw"; }
    std::filesystem::path imu_model() const { return root / "models" / "imu.skw"; }
    std::filesystem::path hardened_model() const { return root / "models" / "anglenet_hardened.skw"; }
    std::filesystem::path train_report() const { return root / "reports" / "train.json"; }
    std::filesystem::path detections() const { return root / "reports" / "detections.tsv"; }
    std::filesystem::path metrics() const { return root / "reports" / "metrics.json"; }
    std::filesystem::path attack_report() const { return root / "reports" / "attack.json"; }
    std::filesystem::path defense_report() const { return root / "reports" / "defense.json"; }
};

struct CorpusSummary {
    std::size_t frames = 0;
    std::size_t normal = 0;
    std::size_t abnormal = 0;
    std::size_t imu_records = 0;
};

struct GenDataResult {
    CorpusSummary train;
    CorpusSummary eval;
};

struct TrainResult {
    double validation_mae_deg = 0.0;
    double validation_accuracy = 0.0;
    double finetune_loss = 0.0;
    double imu_final_loss = 0.0;
    Calibration calibration;
};

struct DetectResult {
    std::vector<ScoredSample> records;
    double mean_latency_ms = 0.0;
};

struct DefenseRow {
    std::string attack;
    double baseline_accuracy = 0.0;
    double hardened_accuracy = 0.0;
};

struct DefendResult {
    std::vector<DefenseRow> rows;  // clean, fgsm, pgd, uap, patch
    std::vector<double> epoch_loss;
};

GenDataResult cmd_gen_data(const RunConfig& config, std::ostream& log);
TrainResult cmd_train(const RunConfig& config, std::ostream& log);
DetectResult cmd_detect(const RunConfig& config, std::ostream& log);
MetricsReport cmd_eval(const RunConfig& config, std::ostream& log);
std::vector<AttackReport> cmd_attack(const RunConfig& config, std::ostream& log);
DefendResult cmd_defend(const RunConfig& config, std::ostream& log);

/// One line per record: timestamp sigma_d sigma_m sigma_l N verdict.
void write_detections(const std::filesystem::path& path, const std::vector<ScoredSample>& records);

struct DetectionLine {
    double timestamp = 0.0;
    double sigma_d = 0.0, sigma_m = 0.0, sigma_l = 0.0, n = 0.0;
    Label verdict = Label::kNormal;
};
std::vector<DetectionLine> read_detections(const std::filesystem::path& path);

/// Matches detections to labels by timestamp; every detection needs a label.
MetricsReport evaluate_detections(const std::vector<DetectionLine>& detections, const CorpusManifest& manifest);

/// Evaluation-corpus frames paired with the reference frame; the label is the
/// absolute rotation difference from the manifest ground truth.
std::vector<AnglePair> make_attack_set(const std::vector<AlignedSample>& samples, std::size_t max_frames);

}  // namespace skywatch
