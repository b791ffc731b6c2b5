#include "skywatch/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "skywatch/ensemble.hpp"

namespace skywatch {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

float sign_of(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

bool flagged(double angle_deg, double threshold_deg) { return angle_deg >= threshold_deg; }

void check_pair_shapes(const Image& reference, const Image& test) {
    if (reference.channels != test.channels || reference.height != test.height || reference.width != test.width) {
        throw std::invalid_argument("reference and test frames differ in shape");
    }
}

}  // namespace

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("attack epsilon must be in [0, 1]");
    if (iterations == 0) throw std::invalid_argument("attack needs at least one iteration");
    if (step_size < 0.0) throw std::invalid_argument("attack step size must be >= 0");
    if (epsilon > 0.0 && alpha() > epsilon) throw std::invalid_argument("attack step size must not exceed epsilon");
    if (!(clip_min < clip_max)) throw std::invalid_argument("attack clip bounds must satisfy min < max");
}

AttackOracle::AttackOracle(const AngleNet& model) : model_(model.clone()) {
    for (auto& p : model_.parameters()) {
        Tensor handle = p;
        handle.set_requires_grad(false);
    }
}

double AttackOracle::gradient(const Image& reference, const Image& test, double true_angle_deg,
                              std::vector<float>& grad, double* predicted_deg) const {
    model_.check_input(reference, "reference");
    model_.check_input(test, "test");
    Tape tape;
    Tensor x = to_tensor(test);
    x.set_requires_grad(true);
    const Tensor out = model_.forward(tape, to_tensor(reference), x);
    const Tensor target = Tensor::scalar(static_cast<float>(true_angle_deg / kAngleUnitDeg));
    const Tensor loss = ops::mse(tape, out, target);
    tape.backward(loss);
    const auto g = x.grad();
    grad.assign(g.begin(), g.end());
    if (predicted_deg) *predicted_deg = static_cast<double>(out.item()) * kAngleUnitDeg;
    return loss.item();
}

double AttackOracle::predict(const Image& reference, const Image& test) const {
    return model_.estimate(reference, test).angle_deg;
}

namespace {

// x + d rounded toward x where needed so that |result - x| <= |d| holds exactly.
float add_within(float x, float d) {
    float y = x + d;
    const double limit = std::abs(static_cast<double>(d));
    while (std::abs(static_cast<double>(y) - static_cast<double>(x)) > limit) y = std::nextafter(y, x);
    return y;
}

}  // namespace

float signed_step(float x, float grad, float step, float lo, float hi) {
    return std::clamp(add_within(x, step * sign_of(grad)), lo, hi);
}

float project_linf(float v, float origin, float eps, float lo, float hi) {
    v = std::clamp(v, lo, hi);
    return std::min(std::max(v, add_within(origin, -eps)), add_within(origin, eps));
}

AdversarialSample fgsm(const AttackOracle& oracle, const Image& reference, const Image& test, double true_angle_deg,
                       const AttackConfig& config, double threshold_deg) {
    config.validate();
    check_pair_shapes(reference, test);
    AdversarialSample s{test, test, "fgsm"};
    std::vector<float> grad;
    oracle.gradient(reference, test, true_angle_deg, grad, &s.clean_angle_deg);
    const auto eps = static_cast<float>(config.epsilon);
    bool any = false;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        any = any || grad[i] != 0.0f;
        s.perturbed.pixels[i] = signed_step(test.pixels[i], grad[i], eps, config.clip_min, config.clip_max);
    }
    if (!any || eps == 0.0f) {
        s.perturbed = test;
        s.adversarial_angle_deg = s.clean_angle_deg;
        return s;
    }
    s.adversarial_angle_deg = oracle.predict(reference, s.perturbed);
    s.success = flagged(s.clean_angle_deg, threshold_deg) != flagged(s.adversarial_angle_deg, threshold_deg);
    return s;
}

AdversarialSample fgsm(const AngleNet& model, const Image& reference, const Image& test, double true_angle_deg,
                       const AttackConfig& config, double threshold_deg) {
    return fgsm(AttackOracle(model), reference, test, true_angle_deg, config, threshold_deg);
}

AdversarialSample pgd(const AttackOracle& oracle, const Image& reference, const Image& test, double true_angle_deg,
                      const AttackConfig& config, double threshold_deg, std::uint64_t stream,
                      const PgdObserver& observer) {
    config.validate();
    check_pair_shapes(reference, test);
    AdversarialSample s{test, test, "pgd"};
    s.clean_angle_deg = oracle.predict(reference, test);
    const auto eps = static_cast<float>(config.epsilon);
    const auto alpha = static_cast<float>(config.alpha());
    if (eps == 0.0f) {
        s.adversarial_angle_deg = s.clean_angle_deg;
        return s;
    }
    Image& x = s.perturbed;
    auto project = [&](std::size_t i, float v) {
        return project_linf(v, test.pixels[i], eps, config.clip_min, config.clip_max);
    };
    if (config.random_start) {
        std::mt19937_64 rng(mix_seed(config.seed, stream));
        std::uniform_real_distribution<float> start(-eps, eps);
        for (std::size_t i = 0; i < x.pixels.size(); ++i) x.pixels[i] = project(i, test.pixels[i] + start(rng));
        if (observer) observer(0, x);
    }
    std::vector<float> grad;
    bool moved = config.random_start;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        oracle.gradient(reference, x, true_angle_deg, grad);
        bool any = false;
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const float sg = sign_of(grad[i]);
            any = any || sg != 0.0f;
            x.pixels[i] = project(i, x.pixels[i] + alpha * sg);
        }
        if (observer) observer(it + 1, x);
        if (!any) break;
        moved = true;
    }
    if (!moved) {
        s.perturbed = test;
        s.adversarial_angle_deg = s.clean_angle_deg;
        return s;
    }
    s.adversarial_angle_deg = oracle.predict(reference, x);
    s.success = flagged(s.clean_angle_deg, threshold_deg) != flagged(s.adversarial_angle_deg, threshold_deg);
    return s;
}

AdversarialSample pgd(const AngleNet& model, const Image& reference, const Image& test, double true_angle_deg,
                      const AttackConfig& config, double threshold_deg, std::uint64_t stream,
                      const PgdObserver& observer) {
    return pgd(AttackOracle(model), reference, test, true_angle_deg, config, threshold_deg, stream, observer);
}

Image apply_perturbation(const Image& image, const Image& delta, float clip_min, float clip_max) {
    if (image.pixels.size() != delta.pixels.size()) throw std::invalid_argument("perturbation shape mismatch");
    Image out = image;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = std::clamp(add_within(image.pixels[i], delta.pixels[i]), clip_min, clip_max);
    }
    return out;
}

double fooling_rate(const AngleNet& model, const std::vector<AnglePair>& pairs, const Image& delta,
                    double threshold_deg) {
    if (pairs.empty()) throw std::invalid_argument("fooling rate over an empty set");
    std::vector<char> fooled(pairs.size(), 0);
    parallel_for(pairs.size(), 0, [&](std::size_t i) {
        const auto& p = pairs[i];
        const double clean = model.estimate(p.reference, p.test).angle_deg;
        const double adv = model.estimate(p.reference, apply_perturbation(p.test, delta)).angle_deg;
        fooled[i] = flagged(clean, threshold_deg) != flagged(adv, threshold_deg);
    });
    return static_cast<double>(std::count(fooled.begin(), fooled.end(), 1)) / static_cast<double>(pairs.size());
}

UniversalPerturbation craft_uap(const AngleNet& model, const std::vector<AnglePair>& pairs, const AttackConfig& config,
                                std::size_t max_passes, double target_fooling_rate, double threshold_deg) {
    config.validate();
    if (pairs.empty()) throw std::invalid_argument("UAP needs a non-empty image set");
    const Image& first = pairs.front().test;
    for (const auto& p : pairs) {
        check_pair_shapes(first, p.test);
        check_pair_shapes(p.reference, p.test);
    }
    const AttackOracle oracle(model);
    UniversalPerturbation uap{Image(first.channels, first.height, first.width, 0.0f), config.epsilon, 0.0, 0};
    const auto eps = static_cast<float>(config.epsilon);
    const auto alpha = static_cast<float>(config.alpha());
    if (eps == 0.0f) return uap;

    std::vector<bool> clean_flag(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        clean_flag[i] = flagged(oracle.predict(pairs[i].reference, pairs[i].test), threshold_deg);
    }
    std::vector<float> grad;
    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Image x = apply_perturbation(pairs[i].test, uap.delta, config.clip_min, config.clip_max);
            double predicted = 0.0;
            oracle.gradient(pairs[i].reference, x, pairs[i].angle_deg, grad, &predicted);
            if (flagged(predicted, threshold_deg) != clean_flag[i]) continue;
            for (std::size_t k = 0; k < grad.size(); ++k) {
                uap.delta.pixels[k] = std::clamp(uap.delta.pixels[k] + alpha * sign_of(grad[k]), -eps, eps);
            }
        }
        uap.passes = pass + 1;
        uap.fooling_rate = fooling_rate(oracle.model(), pairs, uap.delta, threshold_deg);
        if (uap.fooling_rate >= target_fooling_rate) break;
    }
    return uap;
}

Image random_sign_perturbation(std::size_t channels, std::size_t height, std::size_t width, double epsilon,
                               std::uint64_t seed) {
    Image delta(channels, height, width);
    std::mt19937_64 rng(seed);
    for (auto& v : delta.pixels) v = static_cast<float>(rng() & 1 ? epsilon : -epsilon);
    return delta;
}

std::string to_string(PatchKind kind) {
    switch (kind) {
        case PatchKind::kCheckerboard: return "checkerboard";
        case PatchKind::kNoise: return "noise";
        case PatchKind::kSolid: return "solid";
        case PatchKind::kStripes: return "stripes";
        case PatchKind::kRings: return "rings";
    }
    return "unknown";
}

Image make_patch(PatchKind kind, std::size_t size, std::size_t channels, std::uint64_t seed) {
    if (size == 0) throw std::invalid_argument("patch size must be positive");
    Image patch(channels, size, size);
    std::mt19937_64 rng(seed);
    const double c = (static_cast<double>(size) - 1.0) / 2.0;
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            float v = 0.0f;
            switch (kind) {
                case PatchKind::kCheckerboard: v = ((x / 4) + (y / 4)) % 2 ? 1.0f : 0.0f; break;
                case PatchKind::kNoise: v = rng() & 1 ? 1.0f : 0.0f; break;
                case PatchKind::kSolid: v = 1.0f; break;
                case PatchKind::kStripes: v = ((x + y) / 3) % 2 ? 1.0f : 0.0f; break;
                case PatchKind::kRings: {
                    const double r = std::hypot(static_cast<double>(x) - c, static_cast<double>(y) - c);
                    v = static_cast<int>(r / 2.0) % 2 ? 1.0f : 0.0f;
                    break;
                }
            }
            for (std::size_t ch = 0; ch < channels; ++ch) patch.at(ch, y, x) = v;
        }
    }
    return patch;
}

Image apply_patch(const Image& image, const Image& patch, std::size_t y, std::size_t x, double opacity) {
    if (patch.channels != image.channels) throw std::invalid_argument("patch and image channel counts differ");
    if (y + patch.height > image.height || x + patch.width > image.width) {
        throw std::out_of_range("patch " + std::to_string(patch.height) + "x" + std::to_string(patch.width) + " at (" +
                                std::to_string(y) + ", " + std::to_string(x) + ") does not fit a " +
                                std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
    }
    if (!(opacity >= 0.0 && opacity <= 1.0)) throw std::invalid_argument("patch opacity must be in [0, 1]");
    Image out = image;
    const auto a = static_cast<float>(opacity);
    for (std::size_t c = 0; c < image.channels; ++c) {
        for (std::size_t py = 0; py < patch.height; ++py) {
            for (std::size_t px = 0; px < patch.width; ++px) {
                float& dst = out.at(c, y + py, x + px);
                const float v = a == 1.0f ? patch.at(c, py, px) : a * patch.at(c, py, px) + (1.0f - a) * dst;
                dst = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    return out;
}

Image random_patch_overlay(const Image& image, std::size_t patch_size, std::uint64_t seed, std::uint64_t stream) {
    if (patch_size > image.height || patch_size > image.width) throw std::invalid_argument("patch larger than image");
    std::mt19937_64 rng(mix_seed(seed, stream));
    const PatchKind kind = kAllPatchKinds[stream % std::size(kAllPatchKinds)];
    const std::size_t y = rng() % (image.height - patch_size + 1);
    const std::size_t x = rng() % (image.width - patch_size + 1);
    return apply_patch(image, make_patch(kind, patch_size, image.channels, rng()), y, x);
}

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::kNone: return "clean";
        case AttackKind::kFgsm: return "fgsm";
        case AttackKind::kPgd: return "pgd";
        case AttackKind::kUap: return "uap";
        case AttackKind::kPatch: return "patch";
    }
    return "unknown";
}

AttackKind parse_attack_kind(const std::string& name) {
    for (auto k : {AttackKind::kNone, AttackKind::kFgsm, AttackKind::kPgd, AttackKind::kUap, AttackKind::kPatch}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown attack '" + name + "' (expected clean, fgsm, pgd, uap or patch)");
}

AttackReport evaluate_attack(const AngleNet& model, const std::vector<AnglePair>& pairs, const AttackSpec& spec,
                             double threshold_deg) {
    if (pairs.empty()) throw std::invalid_argument("attack evaluation set is empty");
    spec.config.validate();
    const AttackOracle oracle(model);
    std::optional<Image> delta = spec.universal;
    if (spec.kind == AttackKind::kUap && !delta) {
        delta = craft_uap(model, pairs, spec.config, spec.uap_passes, 0.8, threshold_deg).delta;
    }

    struct Outcome {
        bool truth, clean, attacked;
        double linf;
    };
    std::vector<Outcome> outcomes(pairs.size());
    parallel_for(pairs.size(), 0, [&](std::size_t i) {
        const auto& p = pairs[i];
        Image adv;
        switch (spec.kind) {
            case AttackKind::kNone: adv = p.test; break;
            case AttackKind::kFgsm: adv = fgsm(oracle, p.reference, p.test, p.angle_deg, spec.config, threshold_deg).perturbed; break;
            case AttackKind::kPgd:
                adv = pgd(oracle, p.reference, p.test, p.angle_deg, spec.config, threshold_deg, i).perturbed;
                break;
            case AttackKind::kUap: adv = apply_perturbation(p.test, *delta, spec.config.clip_min, spec.config.clip_max); break;
            case AttackKind::kPatch: adv = random_patch_overlay(p.test, spec.patch_size, spec.config.seed, i); break;
        }
        double linf = 0.0;
        for (std::size_t k = 0; k < adv.pixels.size(); ++k) {
            linf = std::max(linf, static_cast<double>(std::abs(adv.pixels[k] - p.test.pixels[k])));
        }
        const bool truth = flagged(p.angle_deg, threshold_deg);
        const bool clean = flagged(oracle.predict(p.reference, p.test), threshold_deg);
        const bool attacked = spec.kind == AttackKind::kNone ? clean : flagged(oracle.predict(p.reference, adv), threshold_deg);
        outcomes[i] = {truth, clean, attacked, linf};
    });

    AttackReport r;
    r.attack = to_string(spec.kind);
    r.samples = pairs.size();
    std::size_t clean_ok = 0, attacked_ok = 0;
    for (const auto& o : outcomes) {
        clean_ok += o.clean == o.truth;
        attacked_ok += o.attacked == o.truth;
        if (o.clean == o.truth) {
            ++r.originally_correct;
            r.flipped_correct += o.attacked != o.truth;
        }
        r.max_linf = std::max(r.max_linf, o.linf);
    }
    const auto n = static_cast<double>(pairs.size());
    r.clean_accuracy = clean_ok / n;
    r.attacked_accuracy = attacked_ok / n;
    r.success_rate = r.originally_correct == 0 ? 0.0
                                               : static_cast<double>(r.flipped_correct) /
                                                     static_cast<double>(r.originally_correct);
    return r;
}

void AdversarialTrainConfig::validate() const {
    if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) throw std::invalid_argument("mix ratio must be in (0, 1]");
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (attacks.empty()) throw std::invalid_argument("adversarial training needs at least one attack");
    for (auto k : attacks) {
        if (k != AttackKind::kFgsm && k != AttackKind::kPgd && k != AttackKind::kPatch) {
            throw std::invalid_argument("adversarial training supports fgsm, pgd and patch attacks, not " + to_string(k));
        }
    }
    attack.validate();
}

AdversarialTrainReport adversarial_train(AngleNet& model, const std::vector<AnglePair>& corpus,
                                         const AdversarialTrainConfig& config, const std::vector<AnglePair>* eval,
                                         const AttackConfig& eval_attack, double threshold_deg) {
    config.validate();
    if (corpus.empty()) throw std::invalid_argument("adversarial training corpus is empty");
    AdversarialTrainReport report;
    AttackSpec pgd_spec;
    pgd_spec.config = eval_attack;
    if (eval) {
        report.pgd_before = evaluate_attack(model, *eval, pgd_spec, threshold_deg);
        report.clean_accuracy_before = report.pgd_before->clean_accuracy;
    }

    Optimizer optimizer(model.parameters(), config.optimizer);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t crafted = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        std::optional<AttackOracle> snapshot;
        if (!config.per_batch) snapshot.emplace(model);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<AnglePair> batch;
            for (std::size_t k = start; k < end; ++k) batch.push_back(corpus[order[k]]);
            const auto n_adv = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(config.mix_ratio * static_cast<double>(batch.size()))));
            std::optional<AttackOracle> live;
            if (config.per_batch) live.emplace(model);
            const AttackOracle& oracle = config.per_batch ? *live : *snapshot;
            for (std::size_t j = 0; j < std::min(n_adv, batch.size()); ++j, ++crafted) {
                auto& p = batch[j];
                switch (config.attacks[crafted % config.attacks.size()]) {
                    case AttackKind::kFgsm:
                        p.test = fgsm(oracle, p.reference, p.test, p.angle_deg, config.attack, threshold_deg).perturbed;
                        break;
                    case AttackKind::kPgd:
                        p.test = pgd(oracle, p.reference, p.test, p.angle_deg, config.attack, threshold_deg, crafted)
                                     .perturbed;
                        break;
                    default:
                        p.test = random_patch_overlay(p.test, config.patch_size, config.seed, crafted);
                        break;
                }
            }
            std::vector<std::size_t> idx(batch.size());
            std::iota(idx.begin(), idx.end(), 0);
            total += train_epoch(model, optimizer, batch, idx, batch.size()) * static_cast<double>(batch.size());
        }
        report.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
    }
    if (eval) {
        report.pgd_after = evaluate_attack(model, *eval, pgd_spec, threshold_deg);
        report.clean_accuracy_after = report.pgd_after->clean_accuracy;
    }
    return report;
}

}  // namespace skywatch
