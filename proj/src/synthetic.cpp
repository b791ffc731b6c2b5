#include "skywatch/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace skywatch {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

SceneRenderer::SceneRenderer(std::uint64_t seed) : seed_(seed) {
    std::mt19937_64 rng(seed);
    // Two-level scenes: ground near one extreme, every structure near the other.
    const bool dark_ground = rng() % 2 == 0;
    const auto level = [&](bool ground) {
        const double v = uniform(rng, 0.0, 0.05);
        return ground == dark_ground ? v : 1.0 - v;
    };
    base_level_ = level(true);
    road_level_ = level(false);
    dash_level_ = level(true);
    for (int i = 0; i < 2; ++i) {
        wave_amp_[i] = uniform(rng, 0.01, 0.03);
        const double dir = uniform(rng, 0.0, 2.0 * kPi);
        const double freq = uniform(rng, 0.03, 0.12);
        wave_fx_[i] = freq * std::cos(dir);
        wave_fy_[i] = freq * std::sin(dir);
        wave_phase_[i] = uniform(rng, 0.0, 2.0 * kPi);
    }
    road_angle_ = uniform(rng, 0.0, kPi);
    road_offset_ = uniform(rng, -40.0, 40.0);
    road_width_ = uniform(rng, 5.0, 10.0);

    constexpr std::size_t kMaxClutter = 16;
    for (std::size_t i = 0; i < kMaxClutter; ++i) {
        Shape s{};
        s.kind = static_cast<int>(rng() % 3);
        s.cx = uniform(rng, -58.0, 58.0);
        s.cy = uniform(rng, -58.0, 58.0);
        s.a = uniform(rng, 4.0, 14.0);
        s.b = uniform(rng, 3.0, 9.0);
        s.angle = uniform(rng, 0.0, kPi);
        s.value = static_cast<float>(level(false));
        clutter_.push_back(s);
    }
    object_body_ = {0, uniform(rng, -8.0, 8.0), uniform(rng, -8.0, 8.0), uniform(rng, 9.0, 13.0), uniform(rng, 5.0, 7.0),
                    uniform(rng, 0.0, kPi), static_cast<float>(level(false))};
    object_stripe_ = object_body_;
    object_stripe_.a = object_body_.a * 0.25;
    object_stripe_.value = static_cast<float>(level(true));
}

namespace {

template <typename S>
bool inside(const S& s, double u, double v) {
    const double du = u - s.cx, dv = v - s.cy;
    const double c = std::cos(s.angle), sn = std::sin(s.angle);
    const double p = c * du + sn * dv;
    const double q = -sn * du + c * dv;
    switch (s.kind) {
        case 0:
            return std::abs(p) <= s.a && std::abs(q) <= s.b;
        case 1:
            return (p * p) / (s.a * s.a) + (q * q) / (s.b * s.b) <= 1.0;
        default:
            return q >= -s.b && q <= s.b && std::abs(p) <= s.a * (s.b - q) / (2.0 * s.b);
    }
}

}  // namespace

Image SceneRenderer::render(const SceneOptions& options) const {
    Image img(1, kSceneSize, kSceneSize);
    const std::size_t n_clutter = std::min(options.clutter_shapes, clutter_.size());
    const double center = (static_cast<double>(kSceneSize) - 1.0) / 2.0;
    const double rc = std::cos(road_angle_), rs = std::sin(road_angle_);
    // 2x2 supersampling keeps edges smooth enough that rotation is the only
    // systematic difference between augmented views.
    constexpr double kSub[2] = {-0.25, 0.25};
    for (std::size_t y = 0; y < kSceneSize; ++y) {
        for (std::size_t x = 0; x < kSceneSize; ++x) {
            double acc = 0.0;
            for (double oy : kSub) {
                for (double ox : kSub) {
                    const double u = static_cast<double>(x) - center + ox;
                    const double v = static_cast<double>(y) - center + oy;
                    double val = base_level_;
                    for (int i = 0; i < 2; ++i) {
                        val += wave_amp_[i] * std::sin(wave_fx_[i] * u + wave_fy_[i] * v + wave_phase_[i]);
                    }
                    const double along = -rs * u + rc * v;
                    const double across = rc * u + rs * v - road_offset_;
                    if (std::abs(across) <= road_width_) {
                        val = road_level_;
                        if (std::abs(across) <= 0.8 && std::fmod(along + 200.0, 12.0) < 7.0) val = dash_level_;
                    }
                    for (std::size_t k = 0; k < n_clutter; ++k) {
                        if (inside(clutter_[k], u, v)) val = clutter_[k].value;
                    }
                    if (options.include_object) {
                        if (inside(object_body_, u, v)) val = object_body_.value;
                        if (inside(object_stripe_, u, v)) val = object_stripe_.value;
                    }
                    acc += val;
                }
            }
            img.at(0, y, x) = static_cast<float>(std::clamp(acc / 4.0, 0.0, 1.0));
        }
    }
    return img;
}

void add_pixel_noise(Image& image, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return;
    std::normal_distribution<float> noise(0.0f, static_cast<float>(sigma));
    for (auto& p : image.pixels) p = std::clamp(p + noise(rng), 0.0f, 1.0f);
}

std::vector<AnglePair> make_shapes_corpus(const ShapesCorpusConfig& config) {
    if (config.pairs == 0 || config.scenes == 0) throw std::invalid_argument("shapes corpus needs pairs and scenes");
    if (!(config.max_angle_deg > 0.0 && config.max_angle_deg <= 90.0)) {
        throw std::invalid_argument("shapes corpus max angle must be in (0, 90]");
    }
    if (!(config.captured_fraction >= 0.0 && config.captured_fraction <= 1.0)) {
        throw std::invalid_argument("shapes corpus captured fraction must be in [0, 1]");
    }
    std::mt19937_64 rng(config.seed);
    std::vector<Image> scenes;
    scenes.reserve(config.scenes);
    for (std::size_t s = 0; s < config.scenes; ++s) {
        const SceneRenderer renderer(rng());
        const SceneOptions opts{true, 3 + static_cast<std::size_t>(rng() % 8)};
        scenes.push_back(renderer.render(opts));
    }
    std::vector<AnglePair> pairs;
    pairs.reserve(config.pairs);
    for (std::size_t i = 0; i < config.pairs; ++i) {
        const Image& scene = scenes[i % config.scenes];
        const double base = uniform(rng, -config.reference_jitter_deg, config.reference_jitter_deg);
        const double theta = uniform(rng, 0.0, config.max_angle_deg);
        // the label is the magnitude; rotation direction is random
        const double sign = rng() % 2 ? 1.0 : -1.0;
        AnglePair p;
        p.angle_deg = theta;
        if (uniform(rng, 0.0, 1.0) < config.captured_fraction) {
            Image frame = rotate_augment(scene, uniform(rng, -config.reference_jitter_deg, config.reference_jitter_deg));
            add_pixel_noise(frame, config.pixel_noise, rng);
            p.reference = rotate_captured(frame, base);
            p.test = rotate_captured(frame, base + sign * theta);
        } else {
            p.reference = rotate_augment(scene, base);
            p.test = rotate_augment(scene, base + sign * theta);
        }
        add_pixel_noise(p.reference, config.pixel_noise, rng);
        add_pixel_noise(p.test, config.pixel_noise, rng);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// IMU

namespace {

constexpr double kSwayHz = 0.5;
constexpr double kEnvelopeHz = 0.037;
constexpr double kGravity = 9.81;
constexpr double kBaseHeading = 0.7;

struct Latent {
    double amplitude;
    double offset;  // phase offset against the shared sway
    double noise;
};

// roll, pitch, yaw, wx, wy, wz, ax, ay, az-bob
constexpr Latent kLatents[9] = {
    {0.05, 0.0, 0.001},  {0.04, 1.1, 0.001},  {0.06, 2.3, 0.001},
    {0.05 * 2 * kPi * kSwayHz, kPi / 2, 0.004},  {0.04 * 2 * kPi * kSwayHz, 1.1 + kPi / 2, 0.004},
    {0.06 * 2 * kPi * kSwayHz, 2.3 + kPi / 2, 0.004},
    {0.04 * kGravity, 1.1 + kPi, 0.01},  {0.05 * kGravity, 0.0, 0.01},  {0.3, 0.7, 0.01},
};

constexpr double kMagBase[3] = {21000.0, -4800.0, 42500.0};
// raw sensor units per radian of roll, pitch, yaw
constexpr double kMagJacobian[3][3] = {{1200.0, -30000.0, 8000.0}, {26000.0, 4000.0, -21000.0}, {-5000.0, 18000.0, 3000.0}};
constexpr double kMagNoise = 4.0;

std::array<double, 4> quaternion_from_euler(double roll, double pitch, double yaw) {
    const double cr = std::cos(roll / 2), sr = std::sin(roll / 2);
    const double cp = std::cos(pitch / 2), sp = std::sin(pitch / 2);
    const double cy = std::cos(yaw / 2), sy = std::sin(yaw / 2);
    return {cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy, cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy};
}

}  // namespace

ImuSimulator::ImuSimulator(double noise_scale, std::uint64_t seed) : rng_(seed), noise_scale_(noise_scale) {
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("IMU noise scale must be >= 0");
    phase0_ = uniform(rng_, 0.0, 2.0 * kPi);
    envelope_phase_ = uniform(rng_, 0.0, 2.0 * kPi);
}

std::pair<ImuDataSample, ImuMagSample> ImuSimulator::sample(double t, bool abnormal, double variance_multiplier) {
    if (!(variance_multiplier >= 1.0)) throw std::invalid_argument("IMU variance multiplier must be >= 1");
    const double envelope = 1.0 + 0.3 * std::sin(2.0 * kPi * kEnvelopeHz * t + envelope_phase_);
    const double phase = 2.0 * kPi * kSwayHz * t + phase0_;
    const double gain = abnormal ? std::sqrt(variance_multiplier) : 1.0;
    std::normal_distribution<double> unit(0.0, 1.0);

    double z[9];
    for (int i = 0; i < 9; ++i) {
        const double ph = abnormal ? uniform(rng_, 0.0, 2.0 * kPi) : phase + kLatents[i].offset;
        z[i] = gain * (envelope * kLatents[i].amplitude * std::sin(ph) + noise_scale_ * kLatents[i].noise * unit(rng_));
    }

    ImuDataSample data;
    data.timestamp = t;
    data.orientation = quaternion_from_euler(z[0], z[1], kBaseHeading + z[2]);
    data.angular_velocity = {z[3], z[4], z[5]};
    data.linear_acceleration = {z[6], z[7], kGravity + z[8]};

    ImuMagSample mag;
    mag.timestamp = t;
    for (int r = 0; r < 3; ++r) {
        double v = kMagBase[r] + gain * noise_scale_ * kMagNoise * unit(rng_);
        for (int c = 0; c < 3; ++c) v += kMagJacobian[r][c] * z[c];
        mag.field[r] = v;
    }
    return {data, mag};
}

std::vector<bool> make_anomaly_schedule(std::size_t count, double fraction, double run_length, std::mt19937_64& rng) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("anomaly fraction must be in [0, 1]");
    if (!(run_length >= 1.0)) throw std::invalid_argument("anomaly run length must be >= 1");
    std::vector<bool> schedule(count, false);
    const auto abnormal = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
    if (abnormal == 0) return schedule;
    if (abnormal >= count) return std::vector<bool>(count, true);
    const std::size_t normal = count - abnormal;
    const std::size_t runs = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(static_cast<double>(abnormal) / run_length)), 1, std::min(abnormal, normal));

    // Random compositions: `runs` positive run lengths summing to `abnormal`,
    // and runs+1 gaps (the first one positive, the rest after it positive
    // except the last) summing to `normal`.
    auto cuts = [&](std::size_t total, std::size_t parts) {
        std::vector<std::size_t> pos(total - 1);
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i + 1;
        std::shuffle(pos.begin(), pos.end(), rng);
        pos.resize(parts - 1);
        std::sort(pos.begin(), pos.end());
        std::vector<std::size_t> sizes;
        std::size_t prev = 0;
        for (auto p : pos) {
            sizes.push_back(p - prev);
            prev = p;
        }
        sizes.push_back(total - prev);
        return sizes;
    };
    const auto run_sizes = cuts(abnormal, runs);
    // gaps: `runs` mandatory positive gaps (leading + between runs) plus an
    // optional trailing gap drawn by splitting normal+1 into runs+1 parts.
    auto gap_sizes = cuts(normal + 1, runs + 1);
    gap_sizes.back() -= 1;
    std::size_t pos = 0;
    for (std::size_t r = 0; r < runs; ++r) {
        pos += gap_sizes[r];
        for (std::size_t k = 0; k < run_sizes[r]; ++k) schedule[pos++] = true;
    }
    return schedule;
}

ImuDataset make_imu_dataset(std::size_t count, double anomaly_fraction, double variance_multiplier,
                            double noise_scale, std::uint64_t seed, double interval_s) {
    std::mt19937_64 rng(seed);
    const auto schedule = make_anomaly_schedule(count, anomaly_fraction, 6.0, rng);
    ImuSimulator sim(noise_scale, rng());
    ImuDataset out;
    for (std::size_t i = 0; i < count; ++i) {
        auto [d, m] = sim.sample(static_cast<double>(i) * interval_s, schedule[i], variance_multiplier);
        out.data.push_back(d);
        out.mag.push_back(m);
        out.labels.push_back(schedule[i] ? Label::kAbnormal : Label::kNormal);
    }
    return out;
}

void SyntheticCorpusConfig::validate(double threshold_deg) const {
    if (frames == 0) throw std::invalid_argument("synthetic corpus needs at least one frame");
    if (!(anomaly_fraction >= 0.0 && anomaly_fraction <= 1.0)) {
        throw std::invalid_argument("anomaly fraction must be in [0, 1]");
    }
    if (!(normal_jitter_deg >= 0.0)) throw std::invalid_argument("normal jitter must be >= 0");
    if (abnormal_min_deg < threshold_deg) {
        throw std::invalid_argument("abnormal rotation minimum " + std::to_string(abnormal_min_deg) +
                                    " is below the frame threshold " + std::to_string(threshold_deg));
    }
    if (!(abnormal_max_deg >= abnormal_min_deg && abnormal_max_deg <= 90.0)) {
        throw std::invalid_argument("abnormal rotation range must satisfy min <= max <= 90");
    }
    if (!(object_removal_probability >= 0.0 && object_removal_probability <= 1.0)) {
        throw std::invalid_argument("object removal probability must be in [0, 1]");
    }
    if (!(imu_noise_scale >= 0.0)) throw std::invalid_argument("IMU noise scale must be >= 0");
    if (!(imu_variance_multiplier >= 1.0)) throw std::invalid_argument("IMU variance multiplier must be >= 1");
    if (!(anomaly_run_length >= 1.0)) throw std::invalid_argument("anomaly run length must be >= 1");
    if (!(frame_interval_s > 0.0)) throw std::invalid_argument("frame interval must be positive");
    if (!(extra_imu_fraction >= 0.0 && extra_imu_fraction <= 1.0)) {
        throw std::invalid_argument("extra IMU fraction must be in [0, 1]");
    }
    if (!(pixel_noise >= 0.0)) throw std::invalid_argument("pixel noise must be >= 0");
}

CorpusManifest generate_synthetic_corpus(const SyntheticCorpusConfig& config, const std::filesystem::path& dir) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir / "frames", ec);
    if (ec) throw std::runtime_error("cannot create corpus directory " + dir.string() + ": " + ec.message());

    const SceneRenderer renderer(config.scene_seed);
    const Image with_object = renderer.render({true, 6});
    const Image without_object = renderer.render({false, 6});

    std::mt19937_64 rng(config.seed);
    const auto schedule = make_anomaly_schedule(config.frames, config.anomaly_fraction, config.anomaly_run_length, rng);
    ImuSimulator imu(config.imu_noise_scale, rng());
    std::mt19937_64 pixel_rng(rng());

    CorpusManifest m;
    m.base_dir = dir;
    char name[64];
    for (std::size_t i = 0; i < config.frames; ++i) {
        const double t = std::round(static_cast<double>(i) * config.frame_interval_s * 1e6) / 1e6;
        const bool abnormal = schedule[i];
        double angle = uniform(rng, -config.normal_jitter_deg, config.normal_jitter_deg);
        bool object = true;
        if (abnormal) {
            const double sign = rng() % 2 ? 1.0 : -1.0;
            angle = sign * uniform(rng, config.abnormal_min_deg, config.abnormal_max_deg);
            object = uniform(rng, 0.0, 1.0) >= config.object_removal_probability;
        }
        Image frame = rotate_augment(object ? with_object : without_object, angle);
        add_pixel_noise(frame, config.pixel_noise, pixel_rng);
        std::snprintf(name, sizeof name, "frames/frame_%06zu.pgm", i);
        write_netpbm(dir / name, frame);
        m.frames.push_back({t, name});
        m.labels.push_back({t, abnormal ? Label::kAbnormal : Label::kNormal});
        m.rotations.push_back({t, angle});

        const double offset = uniform(rng, -0.01, 0.01) * config.frame_interval_s / 0.1;
        auto [d, g] = imu.sample(t + offset, abnormal, config.imu_variance_multiplier);
        m.imu_data.push_back(d);
        m.imu_mag.push_back(g);
        if (uniform(rng, 0.0, 1.0) < config.extra_imu_fraction) {
            const double tm = t + config.frame_interval_s / 2.0;
            auto [d2, g2] = imu.sample(tm, abnormal, config.imu_variance_multiplier);
            m.imu_data.push_back(d2);
            m.imu_mag.push_back(g2);
        }
    }
    const auto manifest_path = dir / "manifest.txt";
    write_manifest(manifest_path, m);
    return read_manifest(manifest_path);
}

}  // namespace skywatch
