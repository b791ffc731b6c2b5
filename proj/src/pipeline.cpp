#include "skywatch/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "skywatch/serialize.hpp"

namespace skywatch {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config reading/writing through one field visitor per section.

class JsonReader {
   public:
    JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename T>
    void operator()(const char* key, T& field) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            read(j_.at(key), field);
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    template <typename F>
    void section(const char* key, F&& visit_children) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        JsonReader child(j_.at(key), path_ + "." + key);
        visit_children(child);
        child.finish();
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(path_ + "." + item.key() + ": unknown key");
        }
    }

   private:
    template <typename T>
    static void read(const json& v, T& field) {
        field = v.get<T>();
    }
    static void read(const json& v, OptimizerKind& field) { field = parse_optimizer_kind(v.get<std::string>()); }
    static void read(const json& v, std::filesystem::path& field) { field = v.get<std::string>(); }
    static void read(const json& v, std::vector<AttackKind>& field) {
        field.clear();
        for (const auto& name : v) field.push_back(parse_attack_kind(name.get<std::string>()));
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

class JsonWriter {
   public:
    template <typename T>
    void operator()(const char* key, const T& field) {
        out[key] = write(field);
    }

    template <typename F>
    void section(const char* key, F&& visit_children) {
        JsonWriter child;
        visit_children(child);
        out[key] = child.out;
    }

    json out = json::object();

   private:
    template <typename T>
    static json write(const T& v) {
        return v;
    }
    static json write(const OptimizerKind& v) { return to_string(v); }
    static json write(const std::filesystem::path& v) { return v.string(); }
    static json write(const std::vector<AttackKind>& v) {
        json a = json::array();
        for (auto k : v) a.push_back(to_string(k));
        return a;
    }
};

template <typename V, typename C>
void visit_optimizer(V& v, C& o) {
    v("kind", o.kind);
    v("learning_rate", o.learning_rate);
    v("beta1", o.beta1);
    v("beta2", o.beta2);
    v("epsilon", o.epsilon);
}

template <typename V, typename C>
void visit_attack(V& v, C& a) {
    v("epsilon", a.epsilon);
    v("iterations", a.iterations);
    v("step_size", a.step_size);
    v("random_start", a.random_start);
    v("clip_min", a.clip_min);
    v("clip_max", a.clip_max);
    v("seed", a.seed);
}

template <typename V, typename C>
void visit_config(V& v, C& c) {
    v("seed", c.seed);
    v("work_dir", c.work_dir);
    v.section("data", [&](auto& s) {
        auto& d = c.data.eval;
        s("frames", d.frames);
        s("anomaly_fraction", d.anomaly_fraction);
        s("normal_jitter_deg", d.normal_jitter_deg);
        s("abnormal_min_deg", d.abnormal_min_deg);
        s("abnormal_max_deg", d.abnormal_max_deg);
        s("object_removal_probability", d.object_removal_probability);
        s("imu_noise_scale", d.imu_noise_scale);
        s("imu_variance_multiplier", d.imu_variance_multiplier);
        s("anomaly_run_length", d.anomaly_run_length);
        s("frame_interval_s", d.frame_interval_s);
        s("extra_imu_fraction", d.extra_imu_fraction);
        s("pixel_noise", d.pixel_noise);
        s("scene_seed", d.scene_seed);
        s("seed", d.seed);
        s("train_frames", c.data.train_frames);
        s("train_seed", c.data.train_seed);
    });
    v.section("shapes", [&](auto& s) {
        s("pairs", c.shapes.pairs);
        s("scenes", c.shapes.scenes);
        s("max_angle_deg", c.shapes.max_angle_deg);
        s("reference_jitter_deg", c.shapes.reference_jitter_deg);
        s("pixel_noise", c.shapes.pixel_noise);
        s("captured_fraction", c.shapes.captured_fraction);
        s("seed", c.shapes.seed);
    });
    v.section("anglenet", [&](auto& s) {
        s("input_size", c.anglenet.input_size);
        s("channels", c.anglenet.channels);
        s("branch_widths", c.anglenet.branch_widths);
        s("fusion_width", c.anglenet.fusion_width);
        s("hidden", c.anglenet.hidden);
        s("kernel_size", c.anglenet.kernel_size);
        s("threshold_deg", c.anglenet.threshold_deg);
        s("init_seed", c.anglenet_seed);
    });
    v.section("pretrain", [&](auto& s) {
        s("epochs", c.pretrain.epochs);
        s("batch_size", c.pretrain.batch_size);
        s("validation_fraction", c.pretrain.validation_fraction);
        s.section("optimizer", [&](auto& o) { visit_optimizer(o, c.pretrain.optimizer); });
        s("lr_decay", c.pretrain.lr_decay);
        s("symmetry_augment", c.pretrain.symmetry_augment);
        s("seed", c.pretrain.seed);
    });
    v.section("finetune", [&](auto& s) {
        s("epochs", c.finetune.epochs);
        s("pairs_per_epoch", c.finetune.pairs_per_epoch);
        s("batch_size", c.finetune.batch_size);
        s.section("optimizer", [&](auto& o) { visit_optimizer(o, c.finetune.optimizer); });
        s("max_angle_deg", c.finetune.max_angle_deg);
        s("same_scene_fraction", c.finetune.same_scene_fraction);
        s("reference_jitter_deg", c.finetune.reference_jitter_deg);
        s("symmetry_augment", c.finetune.symmetry_augment);
        s("seed", c.finetune.seed);
    });
    v.section("imu", [&](auto& s) {
        s("epochs", c.imu.epochs);
        s("batch_size", c.imu.batch_size);
        s.section("optimizer", [&](auto& o) { visit_optimizer(o, c.imu.optimizer); });
        s("lr_decay", c.imu.lr_decay);
        s("seed", c.imu.seed);
        s("init_seed", c.imu_init_seed);
    });
    v.section("ensemble", [&](auto& s) {
        s("w_d", c.ensemble.weights.w_d);
        s("w_m", c.ensemble.weights.w_m);
        s("w_l", c.ensemble.weights.w_l);
        s("threshold", c.ensemble.threshold);
        s("lenient", c.ensemble.lenient);
        s("threads", c.ensemble.threads);
        s("alignment_tolerance_s", c.ensemble.alignment_tolerance_s);
    });
    v.section("attack", [&](auto& s) {
        visit_attack(s, c.attack.config);
        s("uap_passes", c.attack.uap_passes);
        s("patch_size", c.attack.patch_size);
        s("eval_frames", c.attack.eval_frames);
    });
    v.section("defense", [&](auto& s) {
        auto& t = c.defense.train;
        s("epochs", t.epochs);
        s("batch_size", t.batch_size);
        s("mix_ratio", t.mix_ratio);
        s("attacks", t.attacks);
        s.section("attack", [&](auto& a) { visit_attack(a, t.attack); });
        s("patch_size", t.patch_size);
        s.section("optimizer", [&](auto& o) { visit_optimizer(o, t.optimizer); });
        s("per_batch", t.per_batch);
        s("seed", t.seed);
        s("pairs", c.defense.pairs);
        s("max_angle_deg", c.defense.max_angle_deg);
        s("same_scene_fraction", c.defense.same_scene_fraction);
    });
}

std::uint64_t mix(std::uint64_t master, std::uint64_t seed) {
    if (master == 0) return seed;
    std::uint64_t z = seed ^ (master * 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 31)) * 0xbf58476d1ce4e5b9ULL;
    return z ^ (z >> 29);
}

CorpusSummary summarize(const CorpusManifest& m) {
    CorpusSummary s;
    s.frames = m.frames.size();
    for (const auto& l : m.labels) (l.label == Label::kAbnormal ? s.abnormal : s.normal) += 1;
    s.imu_records = m.imu_data.size();
    return s;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void require_file(const std::filesystem::path& path, const char* what) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error(std::string(what) + " not found: " + path.string() + " (run the earlier step first)");
    }
}

LoadResult load_eval(const RunConfig& c, const RunPaths& paths) {
    require_file(paths.eval_corpus() / "manifest.txt", "evaluation corpus");
    LoadOptions opts;
    opts.alignment_tolerance_s = c.ensemble.alignment_tolerance_s;
    opts.lenient = c.ensemble.lenient;
    return load_corpus(paths.eval_corpus() / "manifest.txt", opts);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json report_json(const AttackReport& r) {
    return {{"attack", r.attack},
            {"samples", r.samples},
            {"clean_accuracy", r.clean_accuracy},
            {"attacked_accuracy", r.attacked_accuracy},
            {"success_rate", r.success_rate},
            {"originally_correct", r.originally_correct},
            {"flipped_correct", r.flipped_correct},
            {"max_linf", r.max_linf}};
}

std::vector<AttackSpec> attack_suite(const AttackSection& a) {
    std::vector<AttackSpec> specs;
    for (auto kind : {AttackKind::kNone, AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kUap, AttackKind::kPatch}) {
        AttackSpec s;
        s.kind = kind;
        s.config = a.config;
        if (kind == AttackKind::kFgsm) s.config.iterations = 1;
        s.uap_passes = a.uap_passes;
        s.patch_size = a.patch_size;
        specs.push_back(s);
    }
    return specs;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    JsonReader reader(j, "config");
    visit_config(reader, c);
    reader.finish();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    JsonWriter writer;
    visit_config(writer, *this);
    return writer.out;
}

RunConfig RunConfig::resolved() const {
    RunConfig r = *this;
    r.data.eval.seed = mix(seed, data.eval.seed);
    r.data.eval.scene_seed = mix(seed, data.eval.scene_seed);
    r.data.train_seed = mix(seed, data.train_seed);
    r.shapes.seed = mix(seed, shapes.seed);
    r.anglenet_seed = mix(seed, anglenet_seed);
    r.pretrain.seed = mix(seed, pretrain.seed);
    r.finetune.seed = mix(seed, finetune.seed);
    r.imu.seed = mix(seed, imu.seed);
    r.imu_init_seed = mix(seed, imu_init_seed);
    r.attack.config.seed = mix(seed, attack.config.seed);
    r.defense.train.seed = mix(seed, defense.train.seed);
    r.defense.train.attack.seed = mix(seed, defense.train.attack.seed);
    return r;
}

void RunConfig::validate() const {
    try {
        data.eval.validate(anglenet.threshold_deg);
        if (data.train_frames < 2) throw std::invalid_argument("data.train_frames must be >= 2");
        anglenet.validate();
        ensemble.weights.validate();
        if (!(ensemble.threshold > 0.0)) throw std::invalid_argument("ensemble.threshold must be positive");
        attack.config.validate();
        defense.train.validate();
        if (defense.pairs == 0) throw std::invalid_argument("defense.pairs must be positive");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

void write_detections(const std::filesystem::path& path, const std::vector<ScoredSample>& records) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# timestamp sigma_d sigma_m sigma_l N verdict\n";
    char buf[256];
    for (const auto& r : records) {
        const auto& s = r.scores;
        std::snprintf(buf, sizeof buf, "%.6f %.9f %.9f %.9f %.9f %s\n", s.timestamp, s.sigma_d, s.sigma_m, s.sigma_l,
                      s.n, std::string(to_string(r.verdict.label)).c_str());
        out << buf;
    }
}

std::vector<DetectionLine> read_detections(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open detections " + path.string());
    std::vector<DetectionLine> lines;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (raw.empty() || raw[0] == '#') continue;
        std::istringstream f(raw);
        DetectionLine d;
        std::string verdict;
        if (!(f >> d.timestamp >> d.sigma_d >> d.sigma_m >> d.sigma_l >> d.n >> verdict)) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + ": malformed record");
        }
        d.verdict = parse_label(verdict);
        lines.push_back(d);
    }
    return lines;
}

MetricsReport evaluate_detections(const std::vector<DetectionLine>& detections, const CorpusManifest& manifest) {
    std::vector<double> ts;
    for (const auto& l : manifest.labels) ts.push_back(l.timestamp);
    std::vector<Label> predicted, truth;
    for (const auto& d : detections) {
        const auto i = nearest_within(ts, d.timestamp, 1e-6);
        if (!i) throw std::runtime_error("no label for detection at t=" + std::to_string(d.timestamp));
        predicted.push_back(d.verdict);
        truth.push_back(manifest.labels[*i].label);
    }
    return evaluate_predictions(predicted, truth);
}

std::vector<AnglePair> make_attack_set(const std::vector<AlignedSample>& samples, std::size_t max_frames) {
    if (samples.empty()) throw std::invalid_argument("no samples for the attack set");
    const std::size_t ref = default_reference_index(samples);
    if (!samples[ref].rotation_deg) throw std::invalid_argument("attack set needs rotation ground truth");
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i != ref) pick.push_back(i);
    }
    if (max_frames > 0 && pick.size() > max_frames) {
        std::vector<std::size_t> spaced;
        for (std::size_t k = 0; k < max_frames; ++k) spaced.push_back(pick[k * pick.size() / max_frames]);
        pick = std::move(spaced);
    }
    std::vector<AnglePair> pairs;
    for (auto i : pick) {
        if (!samples[i].rotation_deg) throw std::invalid_argument("attack set needs rotation ground truth");
        pairs.push_back({samples[ref].image, samples[i].image,
                         std::abs(*samples[i].rotation_deg - *samples[ref].rotation_deg)});
    }
    return pairs;
}

GenDataResult cmd_gen_data(const RunConfig& config, std::ostream& log) {
    const RunConfig c = config.resolved();
    c.validate();
    const RunPaths paths{c.work_dir};
    SyntheticCorpusConfig train = c.data.eval;
    train.frames = c.data.train_frames;
    train.anomaly_fraction = 0.0;
    train.seed = c.data.train_seed;
    GenDataResult r;
    r.train = summarize(generate_synthetic_corpus(train, paths.train_corpus()));
    r.eval = summarize(generate_synthetic_corpus(c.data.eval, paths.eval_corpus()));
    log << "train corpus: " << r.train.frames << " frames (" << r.train.normal << " normal, " << r.train.abnormal
        << " abnormal), " << r.train.imu_records << " IMU records -> " << paths.train_corpus().string() << '\n';
    log << "eval corpus:  " << r.eval.frames << " frames (" << r.eval.normal << " normal, " << r.eval.abnormal
        << " abnormal), " << r.eval.imu_records << " IMU records -> " << paths.eval_corpus().string() << '\n';
    return r;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
    const RunConfig c = config.resolved();
    c.validate();
    const RunPaths paths{c.work_dir};
    require_file(paths.train_corpus() / "manifest.txt", "training corpus");
    const CorpusManifest manifest = read_manifest(paths.train_corpus() / "manifest.txt");
    if (manifest.has_abnormal_label()) {
        throw std::runtime_error("training corpus " + paths.train_corpus().string() +
                                 " contains abnormal-labeled frames; training uses normal data only");
    }
    LoadOptions opts;
    opts.alignment_tolerance_s = c.ensemble.alignment_tolerance_s;
    const LoadResult loaded = load_corpus(manifest, opts);
    for (const auto& w : loaded.warnings) log << "warning: " << w << '\n';

    TrainResult result;
    auto t0 = std::chrono::steady_clock::now();
    const auto shapes = make_shapes_corpus(c.shapes);
    AngleNet net(c.anglenet, c.anglenet_seed);
    const TrainReport pre = pretrain(net, shapes, c.pretrain);
    result.validation_mae_deg = pre.best_validation_mae_deg;
    std::size_t correct = 0;
    for (auto i : pre.validation_indices) {
        const bool predicted = net.estimate(shapes[i].reference, shapes[i].test).angle_deg >= c.anglenet.threshold_deg;
        correct += predicted == (shapes[i].angle_deg >= c.anglenet.threshold_deg);
    }
    result.validation_accuracy =
        pre.validation_indices.empty() ? 0.0 : static_cast<double>(correct) / pre.validation_indices.size();
    log << "anglenet pretrain: validation MAE " << result.validation_mae_deg << " deg, accuracy@"
        << c.anglenet.threshold_deg << " " << result.validation_accuracy << " (best epoch " << pre.best_epoch << ", "
        << seconds_since(t0) << " s)\n";

    std::filesystem::create_directories(paths.pretrained_model().parent_path());
    save_anglenet(paths.pretrained_model(), net);

    std::vector<Image> frames;
    for (const auto& s : loaded.samples) frames.push_back(s.image);
    result.finetune_loss = finetune(net, frames, c.finetune);
    log << "anglenet finetune: final loss " << result.finetune_loss << '\n';

    std::vector<std::vector<double>> raw_data, raw_mag;
    for (const auto& s : loaded.samples) {
        raw_data.push_back(s.data->features());
        raw_mag.push_back(s.mag->features());
    }
    ImuDetector imu{Normalizer::fit(raw_data), Normalizer::fit(raw_mag),
                    Autoencoder(AutoencoderConfig::imu_data(), c.imu_init_seed),
                    Autoencoder(AutoencoderConfig::imu_mag(), c.imu_init_seed + 1), {}};
    std::vector<std::vector<float>> nd, nm;
    for (std::size_t i = 0; i < raw_data.size(); ++i) {
        nd.push_back(imu.data_normalizer.apply(raw_data[i]));
        nm.push_back(imu.mag_normalizer.apply(raw_mag[i]));
    }
    const ImuTrainReport imu_report = train_joint(imu.data_model, imu.mag_model, nd, nm, c.imu);
    imu.calibration = imu_report.calibration;
    result.imu_final_loss = imu_report.epoch_loss.empty() ? 0.0 : imu_report.epoch_loss.back();
    result.calibration = imu.calibration;
    log << "imu autoencoders: final L1+L2 " << result.imu_final_loss << ", L_max data "
        << imu.calibration.max_data_loss << ", L_max mag " << imu.calibration.max_mag_loss << '\n';

    std::filesystem::create_directories(paths.anglenet_model().parent_path());
    save_anglenet(paths.anglenet_model(), net);
    save_imu_detector(paths.imu_model(), imu);
    json history = json::array();
    for (const auto& h : pre.history) {
        history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"validation_mae_deg", h.validation_mae_deg}});
    }
    write_json(paths.train_report(), {{"validation_mae_deg", result.validation_mae_deg},
                                      {"validation_accuracy", result.validation_accuracy},
                                      {"best_epoch", pre.best_epoch},
                                      {"history", history},
                                      {"finetune_loss", result.finetune_loss},
                                      {"imu_final_loss", result.imu_final_loss},
                                      {"max_data_loss", imu.calibration.max_data_loss},
                                      {"max_mag_loss", imu.calibration.max_mag_loss}});
    log << "models written to " << paths.anglenet_model().parent_path().string() << '\n';
    return result;
}

DetectResult cmd_detect(const RunConfig& config, std::ostream& log) {
    const RunConfig c = config.resolved();
    c.validate();
    const RunPaths paths{c.work_dir};
    require_file(paths.anglenet_model(), "AngleNet model");
    require_file(paths.imu_model(), "IMU model");
    const AngleNet net = load_anglenet(paths.anglenet_model());
    const ImuDetector imu = load_imu_detector(paths.imu_model());
    const LoadResult loaded = load_eval(c, paths);
    for (const auto& w : loaded.warnings) log << "warning: " << w << '\n';

    StreamOptions opts;
    opts.weights = c.ensemble.weights;
    opts.threshold = c.ensemble.threshold;
    opts.lenient = c.ensemble.lenient;
    opts.threads = c.ensemble.threads;
    const auto t0 = std::chrono::steady_clock::now();
    DetectResult r;
    r.records = score_stream(loaded.samples, Detector{&net, &imu}, opts);
    const double elapsed = seconds_since(t0);
    r.mean_latency_ms = r.records.empty() ? 0.0 : 1000.0 * elapsed / static_cast<double>(r.records.size());
    write_detections(paths.detections(), r.records);
    std::size_t flagged = 0;
    for (const auto& rec : r.records) flagged += rec.verdict.label == Label::kAbnormal;
    log << "scored " << r.records.size() << " timestamps, " << flagged << " abnormal; mean latency "
        << r.mean_latency_ms << " ms/frame -> " << paths.detections().string() << '\n';
    return r;
}

MetricsReport cmd_eval(const RunConfig& config, std::ostream& log) {
    const RunConfig c = config.resolved();
    const RunPaths paths{c.work_dir};
    require_file(paths.detections(), "detection results");
    require_file(paths.eval_corpus() / "manifest.txt", "evaluation corpus");
    const MetricsReport m =
        evaluate_detections(read_detections(paths.detections()), read_manifest(paths.eval_corpus() / "manifest.txt"));
    json j = m.to_json();
    j["detections"] = paths.detections().filename().string();  // relative to the reports directory
    write_json(paths.metrics(), j);
    char buf[256];
    std::snprintf(buf, sizeof buf, "accuracy %.4f  F1 %.4f  precision %.4f  recall %.4f  FN %zu  FP %zu  (n=%zu)\n",
                  m.accuracy(), m.f1(), m.precision(), m.recall(), m.fn, m.fp, m.total());
    log << buf;
    return m;
}

std::vector<AttackReport> cmd_attack(const RunConfig& config, std::ostream& log) {
    const RunConfig c = config.resolved();
    c.validate();
    const RunPaths paths{c.work_dir};
    require_file(paths.anglenet_model(), "AngleNet model");
    const AngleNet net = load_anglenet(paths.anglenet_model());
    const auto set = make_attack_set(load_eval(c, paths).samples, c.attack.eval_frames);
    std::vector<AttackReport> reports;
    json rows = json::array();
    for (const auto& spec : attack_suite(c.attack)) {
        const auto t0 = std::chrono::steady_clock::now();
        reports.push_back(evaluate_attack(net, set, spec, c.anglenet.threshold_deg));
        const auto& r = reports.back();
        rows.push_back(report_json(r));
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-6s accuracy %.3f (clean %.3f)  success rate %.3f  max linf %.3f  [%.1f s]\n",
                      r.attack.c_str(), r.attacked_accuracy, r.clean_accuracy, r.success_rate, r.max_linf,
                      seconds_since(t0));
        log << buf;
    }
    write_json(paths.attack_report(), {{"threshold_deg", c.anglenet.threshold_deg}, {"attacks", rows}});
    return reports;
}

DefendResult cmd_defend(const RunConfig& config, std::ostream& log) {
    const RunConfig c = config.resolved();
    c.validate();
    const RunPaths paths{c.work_dir};
    require_file(paths.anglenet_model(), "AngleNet model");
    require_file(paths.train_corpus() / "manifest.txt", "training corpus");
    const AngleNet baseline = load_anglenet(paths.anglenet_model());
    const CorpusManifest train_manifest = read_manifest(paths.train_corpus() / "manifest.txt");
    if (train_manifest.has_abnormal_label()) {
        throw std::runtime_error("training corpus contains abnormal-labeled frames");
    }
    LoadOptions opts;
    opts.alignment_tolerance_s = c.ensemble.alignment_tolerance_s;
    std::vector<Image> frames;
    for (const auto& s : load_corpus(train_manifest, opts).samples) frames.push_back(s.image);
    const auto corpus = make_self_labeled_pairs(frames, c.defense.pairs, c.defense.max_angle_deg,
                                                c.defense.same_scene_fraction, c.defense.train.seed);

    AngleNet hardened = baseline.clone();
    const auto t0 = std::chrono::steady_clock::now();
    const auto train_report = adversarial_train(hardened, corpus, c.defense.train);
    log << "adversarial training: " << train_report.epoch_loss.size() << " epochs, final loss "
        << (train_report.epoch_loss.empty() ? 0.0 : train_report.epoch_loss.back()) << " (" << seconds_since(t0)
        << " s)\n";
    save_anglenet(paths.hardened_model(), hardened);

    const auto set = make_attack_set(load_eval(c, paths).samples, c.attack.eval_frames);
    DefendResult result;
    result.epoch_loss = train_report.epoch_loss;
    json rows = json::array();
    log << "attack   baseline  hardened\n";
    for (const auto& spec : attack_suite(c.attack)) {
        const auto before = evaluate_attack(baseline, set, spec, c.anglenet.threshold_deg);
        const auto after = evaluate_attack(hardened, set, spec, c.anglenet.threshold_deg);
        result.rows.push_back({before.attack, before.attacked_accuracy, after.attacked_accuracy});
        rows.push_back({{"attack", before.attack},
                        {"baseline_accuracy", before.attacked_accuracy},
                        {"hardened_accuracy", after.attacked_accuracy},
                        {"baseline", report_json(before)},
                        {"hardened", report_json(after)}});
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-7s  %.3f     %.3f\n", before.attack.c_str(), before.attacked_accuracy,
                      after.attacked_accuracy);
        log << buf;
    }
    json losses = train_report.epoch_loss;
    write_json(paths.defense_report(),
               {{"threshold_deg", c.anglenet.threshold_deg}, {"epoch_loss", losses}, {"rows", rows}});
    return result;
}

}  // namespace skywatch
