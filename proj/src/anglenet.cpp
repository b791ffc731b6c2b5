#include "skywatch/anglenet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace skywatch {
namespace {

ConvLayer make_conv(std::size_t in, std::size_t out, std::size_t k, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(in * k * k)));
    std::vector<float> w(out * in * k * k);
    for (auto& v : w) v = dist(rng);
    return {Tensor::from({out, in, k, k}, std::move(w), true), Tensor::zeros({out}, true)};
}

DenseLayer make_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(in)));
    std::vector<float> w(out * in);
    for (auto& v : w) v = dist(rng);
    return {Tensor::from({out, in}, std::move(w), true), Tensor::zeros({out}, true)};
}

void copy_values(const Tensor& from, Tensor& to) {
    if (from.shape() != to.shape()) {
        throw ShapeError("parameter shape mismatch: " + shape_to_string(from.shape()) + " vs " +
                         shape_to_string(to.shape()));
    }
    std::copy(from.data().begin(), from.data().end(), to.data().begin());
}

std::vector<std::vector<float>> snapshot(const std::vector<Tensor>& params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.emplace_back(p.data().begin(), p.data().end());
    return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<float>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(values[i].begin(), values[i].end(), params[i].data().begin());
}

}  // namespace

void AngleNetConfig::validate() const {
    if (input_size != kFrameSize) {
        throw std::invalid_argument("AngleNet input size is fixed at 64, got " + std::to_string(input_size));
    }
    if (channels != 1 && channels != 3) throw std::invalid_argument("AngleNet channels must be 1 or 3");
    if (branch_widths.empty()) throw std::invalid_argument("AngleNet needs at least one conv block per branch");
    for (auto w : branch_widths) {
        if (w == 0) throw std::invalid_argument("AngleNet conv widths must be positive");
    }
    if (fusion_width == 0 || hidden[0] == 0 || hidden[1] == 0) {
        throw std::invalid_argument("AngleNet layer widths must be positive");
    }
    if (kernel_size % 2 == 0) throw std::invalid_argument("AngleNet kernel size must be odd");
    const std::size_t pools = branch_widths.size() + 1;
    if (pools >= 7 || (input_size >> pools) == 0) {
        throw std::invalid_argument("too many conv blocks for a 64x64 input");
    }
    if (!(threshold_deg > 0.0)) throw std::invalid_argument("threshold angle must be positive");
}

AngleEstimate make_estimate(double angle_deg) { return {angle_deg, angle_deg / kAngleUnitDeg}; }

AngleNet::AngleNet(const AngleNetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    std::size_t in = config_.channels;
    for (auto width : config_.branch_widths) {
        branches_[0].push_back(make_conv(in, width, config_.kernel_size, rng));
        in = width;
    }
    branches_[1] = branches_[0];  // handle copies: both branches alias one weight set
    fusion_ = make_conv(2 * in, config_.fusion_width, config_.kernel_size, rng);
    const std::size_t side = config_.input_size >> (config_.branch_widths.size() + 1);
    hidden1_ = make_dense(config_.fusion_width * side * side, config_.hidden[0], rng);
    hidden2_ = make_dense(config_.hidden[0], config_.hidden[1], rng);
    head_ = make_dense(config_.hidden[1], 1, rng);
    // Start near mid-range with little input dependence so the first updates
    // cannot push the ReLU head negative for every pair at once.
    for (auto& w : head_.weights.data()) w *= 0.1f;
    head_.bias.data()[0] = 0.5f;
}

Tensor AngleNet::forward(Tape& tape, const Tensor& reference, const Tensor& test) const {
    const Shape expected{config_.channels, config_.input_size, config_.input_size};
    if (reference.shape() != expected || test.shape() != expected) {
        throw ShapeError("AngleNet expects inputs " + shape_to_string(expected) + ", got " +
                         shape_to_string(reference.shape()) + " and " + shape_to_string(test.shape()));
    }
    auto run_branch = [&](const std::vector<ConvLayer>& layers, Tensor x) {
        for (const auto& layer : layers) {
            x = ops::conv2d(tape, x, layer.kernels, layer.bias, Padding::kSame);
            x = ops::relu(tape, x);
            x = ops::maxpool2d(tape, x);
        }
        return x;
    };
    Tensor a = run_branch(branches_[0], reference);
    Tensor b = run_branch(branches_[1], test);
    Tensor x = ops::concat_channels(tape, a, b);
    x = ops::conv2d(tape, x, fusion_.kernels, fusion_.bias, Padding::kSame);
    x = ops::relu(tape, x);
    x = ops::maxpool2d(tape, x);
    x = ops::flatten(tape, x);
    x = ops::relu(tape, ops::dense(tape, x, hidden1_.weights, hidden1_.bias));
    x = ops::relu(tape, ops::dense(tape, x, hidden2_.weights, hidden2_.bias));
    return ops::relu(tape, ops::dense(tape, x, head_.weights, head_.bias));
}

void AngleNet::check_input(const Image& image, const char* role) const {
    if (image.channels != config_.channels || image.height != config_.input_size ||
        image.width != config_.input_size) {
        throw ShapeError(std::string(role) + " image must be " + std::to_string(config_.channels) + "x" +
                         std::to_string(config_.input_size) + "x" + std::to_string(config_.input_size) + ", got " +
                         std::to_string(image.channels) + "x" + std::to_string(image.height) + "x" +
                         std::to_string(image.width));
    }
}

AngleEstimate AngleNet::estimate(const Image& reference, const Image& test) const {
    check_input(reference, "reference");
    check_input(test, "test");
    Tape tape(GradMode::kNoGrad);
    const Tensor out = forward(tape, to_tensor(reference), to_tensor(test));
    return make_estimate(static_cast<double>(out.item()) * kAngleUnitDeg);
}

std::vector<Tensor> AngleNet::parameters() const {
    std::vector<Tensor> params;
    for (const auto& layer : branches_[0]) {
        params.push_back(layer.kernels);
        params.push_back(layer.bias);
    }
    for (const auto* layer : {&fusion_}) {
        params.push_back(layer->kernels);
        params.push_back(layer->bias);
    }
    for (const auto* layer : {&hidden1_, &hidden2_, &head_}) {
        params.push_back(layer->weights);
        params.push_back(layer->bias);
    }
    return params;
}

std::vector<std::string> AngleNet::parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < branches_[0].size(); ++i) {
        names.push_back("branch." + std::to_string(i) + ".kernels");
        names.push_back("branch." + std::to_string(i) + ".bias");
    }
    for (const char* name : {"fusion", "hidden1", "hidden2", "head"}) {
        const std::string base(name);
        names.push_back(base + (base == "fusion" ? ".kernels" : ".weights"));
        names.push_back(base + ".bias");
    }
    return names;
}

AngleNet AngleNet::clone() const {
    AngleNet copy(config_, 0);
    copy.assign_from(*this);
    return copy;
}

void AngleNet::assign_from(const AngleNet& other) {
    if (!(other.config_ == config_)) throw std::invalid_argument("cannot assign AngleNet with a different config");
    auto mine = parameters();
    const auto theirs = other.parameters();
    for (std::size_t i = 0; i < mine.size(); ++i) copy_values(theirs[i], mine[i]);
}

void split_indices(std::size_t count, double validation_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& validation) {
    if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
        throw std::invalid_argument("validation fraction must be in [0,1)");
    }
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(count)));
    if (validation_fraction > 0.0 && count >= 2) n_val = std::clamp<std::size_t>(n_val, 1, count - 1);
    validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
}

double mean_absolute_error(const AngleNet& model, const std::vector<AnglePair>& pairs,
                           const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    double total = 0.0;
    for (auto i : indices) {
        const auto est = model.estimate(pairs[i].reference, pairs[i].test);
        total += std::abs(est.angle_deg - pairs[i].angle_deg);
    }
    return total / static_cast<double>(indices.size());
}

AnglePair augment_pair(const AnglePair& pair, std::mt19937_64& rng) {
    const auto bits = rng();
    AnglePair out = (bits & 1) ? AnglePair{pair.test, pair.reference, pair.angle_deg} : pair;
    if (bits & 2) {
        out.reference = mirror(out.reference);
        out.test = mirror(out.test);
    }
    if (const int k = static_cast<int>((bits >> 2) & 3)) {
        out.reference = quarter_turn(out.reference, k);
        out.test = quarter_turn(out.test, k);
    }
    return out;
}

double train_epoch(AngleNet& model, Optimizer& optimizer, const std::vector<AnglePair>& pairs,
                   const std::vector<std::size_t>& order, std::size_t batch_size, std::mt19937_64* augment_rng) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        const float weight = 1.0f / static_cast<float>(end - start);
        optimizer.zero_grad();
        for (std::size_t k = start; k < end; ++k) {
            const AnglePair pair = augment_rng ? augment_pair(pairs[order[k]], *augment_rng) : pairs[order[k]];
            Tape tape;
            const Tensor out = model.forward(tape, to_tensor(pair.reference), to_tensor(pair.test));
            const Tensor target = Tensor::scalar(static_cast<float>(pair.angle_deg / kAngleUnitDeg));
            const Tensor loss = ops::mse(tape, out, target);
            total += loss.item();
            tape.backward(ops::scale(tape, loss, weight));
        }
        optimizer.step();
    }
    return order.empty() ? 0.0 : total / static_cast<double>(order.size());
}

TrainReport pretrain(AngleNet& model, const std::vector<AnglePair>& corpus, const TrainConfig& config) {
    if (corpus.empty()) throw std::invalid_argument("pretraining corpus is empty");
    TrainReport report;
    split_indices(corpus.size(), config.validation_fraction, config.seed, report.train_indices,
                  report.validation_indices);
    auto params = model.parameters();
    Optimizer optimizer(params, config.optimizer);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    auto order = report.train_indices;

    const auto& select = report.validation_indices.empty() ? report.train_indices : report.validation_indices;
    report.best_validation_mae_deg = mean_absolute_error(model, corpus, select);
    auto best = snapshot(params);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = train_epoch(model, optimizer, corpus, order, config.batch_size,
                                        config.symmetry_augment ? &rng : nullptr);
        record.validation_mae_deg = mean_absolute_error(model, corpus, select);
        report.history.push_back(record);
        if (record.validation_mae_deg < report.best_validation_mae_deg) {
            report.best_validation_mae_deg = record.validation_mae_deg;
            report.best_epoch = epoch;
            best = snapshot(params);
        }
        optimizer.set_learning_rate(optimizer.learning_rate() * config.lr_decay);
    }
    restore(params, best);
    return report;
}

std::vector<AnglePair> make_self_labeled_pairs(const std::vector<Image>& normal_frames, std::size_t count,
                                               double max_angle_deg, double same_scene_fraction,
                                               std::uint64_t seed, double reference_jitter_deg) {
    if (normal_frames.empty()) throw std::invalid_argument("no normal frames to build pairs from");
    if (!(reference_jitter_deg >= 0.0)) throw std::invalid_argument("reference jitter must be >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, normal_frames.size() - 1);
    std::uniform_real_distribution<double> angle(0.0, max_angle_deg);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<AnglePair> pairs;
    pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const bool same_scene = normal_frames.size() >= 2 && coin(rng) < same_scene_fraction;
        if (same_scene) {
            const std::size_t a = pick(rng);
            std::size_t b = pick(rng);
            if (b == a) b = (a + 1) % normal_frames.size();
            pairs.push_back({normal_frames[a], normal_frames[b], 0.0});
        } else {
            const Image& frame = normal_frames[pick(rng)];
            const double theta = angle(rng);
            const double sign = coin(rng) < 0.5 ? -1.0 : 1.0;
            const double phi = reference_jitter_deg * (2.0 * coin(rng) - 1.0);
            pairs.push_back({rotate_captured(frame, phi), rotate_captured(frame, phi + sign * theta), theta});
        }
    }
    return pairs;
}

double finetune(AngleNet& model, const std::vector<Image>& normal_frames, const FinetuneConfig& config) {
    if (normal_frames.empty()) throw std::invalid_argument("finetuning needs at least one normal frame");
    if (config.epochs == 0) return 0.0;
    auto params = model.parameters();
    Optimizer optimizer(params, config.optimizer);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    double last = 0.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto pairs = make_self_labeled_pairs(normal_frames, config.pairs_per_epoch, config.max_angle_deg,
                                                   config.same_scene_fraction, config.seed + epoch,
                                                   config.reference_jitter_deg);
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        last = train_epoch(model, optimizer, pairs, order, config.batch_size,
                           config.symmetry_augment ? &rng : nullptr);
    }
    return last;
}

Label classify_frame(const AngleEstimate& estimate, double threshold_deg) {
    if (!(threshold_deg > 0.0)) throw std::invalid_argument("threshold angle must be positive");
    return estimate.angle_deg >= threshold_deg ? Label::kAbnormal : Label::kNormal;
}

}  // namespace skywatch
