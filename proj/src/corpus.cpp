#include "skywatch/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace skywatch {

bool CorpusManifest::has_abnormal_label() const {
    return std::any_of(labels.begin(), labels.end(), [](const LabelRecord& r) { return r.label == Label::kAbnormal; });
}

ManifestError::ManifestError(const std::string& source, std::size_t line, const std::string& message)
    : std::runtime_error(source + ": line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

double parse_number(const std::string& token, const std::string& source, std::size_t line, const char* what) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != token.size() || !std::isfinite(value)) {
        throw ManifestError(source, line, std::string("bad ") + what + " '" + token + "'");
    }
    return value;
}

template <typename Records>
void check_order(const Records& records, double t, const std::string& source, std::size_t line, const char* stream) {
    if (!records.empty() && t < records.back().timestamp) {
        throw ManifestError(source, line, std::string(stream) + " timestamps must be non-decreasing");
    }
}

}  // namespace

CorpusManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir, const std::string& source) {
    CorpusManifest m;
    m.base_dir = base_dir;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream fields(raw);
        std::vector<std::string> tok;
        for (std::string s; fields >> s;) tok.push_back(s);
        if (tok.empty()) continue;

        const std::string& tag = tok[0];
        auto expect = [&](std::size_t n) {
            if (tok.size() != n) {
                throw ManifestError(source, line_no,
                                    "'" + tag + "' expects " + std::to_string(n - 1) + " fields, got " +
                                        std::to_string(tok.size() - 1));
            }
        };
        if (tok.size() < 2) throw ManifestError(source, line_no, "missing timestamp");
        const double t = parse_number(tok[1], source, line_no, "timestamp");

        if (tag == "frame") {
            expect(3);
            check_order(m.frames, t, source, line_no, "frame");
            m.frames.push_back({t, tok[2]});
        } else if (tag == "imu_data") {
            expect(2 + kImuDataWidth);
            check_order(m.imu_data, t, source, line_no, "imu_data");
            ImuDataSample s;
            s.timestamp = t;
            for (std::size_t i = 0; i < 4; ++i) s.orientation[i] = parse_number(tok[2 + i], source, line_no, "value");
            for (std::size_t i = 0; i < 3; ++i) {
                s.angular_velocity[i] = parse_number(tok[6 + i], source, line_no, "value");
                s.linear_acceleration[i] = parse_number(tok[9 + i], source, line_no, "value");
            }
            try {
                normalize_orientation(s);
            } catch (const std::invalid_argument& e) {
                throw ManifestError(source, line_no, e.what());
            }
            m.imu_data.push_back(s);
        } else if (tag == "imu_mag") {
            expect(2 + kImuMagWidth);
            check_order(m.imu_mag, t, source, line_no, "imu_mag");
            ImuMagSample s;
            s.timestamp = t;
            for (std::size_t i = 0; i < 3; ++i) s.field[i] = parse_number(tok[2 + i], source, line_no, "value");
            m.imu_mag.push_back(s);
        } else if (tag == "label") {
            expect(3);
            check_order(m.labels, t, source, line_no, "label");
            try {
                m.labels.push_back({t, parse_label(tok[2])});
            } catch (const std::invalid_argument& e) {
                throw ManifestError(source, line_no, e.what());
            }
        } else if (tag == "rotation") {
            expect(3);
            check_order(m.rotations, t, source, line_no, "rotation");
            m.rotations.push_back({t, parse_number(tok[2], source, line_no, "rotation")});
        } else {
            throw ManifestError(source, line_no, "unknown record type '" + tag + "'");
        }
    }
    return m;
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path(), path.string());
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest " + path.string());
    char buf[512];
    out << "# skywatch corpus manifest\n";
    for (const auto& f : m.frames) {
        std::snprintf(buf, sizeof buf, "frame %.6f %s\n", f.timestamp, f.path.c_str());
        out << buf;
    }
    for (const auto& s : m.imu_data) {
        const auto v = s.features();
        int n = std::snprintf(buf, sizeof buf, "imu_data %.6f", s.timestamp);
        for (double x : v) n += std::snprintf(buf + n, sizeof buf - n, " %.9g", x);
        out << buf << '\n';
    }
    for (const auto& s : m.imu_mag) {
        std::snprintf(buf, sizeof buf, "imu_mag %.6f %.9g %.9g %.9g\n", s.timestamp, s.field[0], s.field[1],
                      s.field[2]);
        out << buf;
    }
    for (const auto& l : m.labels) {
        std::snprintf(buf, sizeof buf, "label %.6f %s\n", l.timestamp, std::string(to_string(l.label)).c_str());
        out << buf;
    }
    for (const auto& r : m.rotations) {
        std::snprintf(buf, sizeof buf, "rotation %.6f %.6f\n", r.timestamp, r.degrees);
        out << buf;
    }
    if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

std::optional<std::size_t> nearest_within(const std::vector<double>& ts, double t, double tolerance) {
    if (ts.empty()) return std::nullopt;
    const auto it = std::lower_bound(ts.begin(), ts.end(), t);
    std::optional<std::size_t> best;
    double best_gap = 0.0;
    auto consider = [&](std::size_t i) {
        const double gap = std::abs(ts[i] - t);
        if (gap <= tolerance + 1e-9 && (!best || gap < best_gap)) {
            best = i;
            best_gap = gap;
        }
    };
    const auto pos = static_cast<std::size_t>(it - ts.begin());
    if (pos > 0) consider(pos - 1);  // earlier candidate first so ties keep it
    if (pos < ts.size()) consider(pos);
    return best;
}

namespace {

template <typename Records>
std::vector<double> timestamps_of(const Records& records) {
    std::vector<double> ts;
    ts.reserve(records.size());
    for (const auto& r : records) ts.push_back(r.timestamp);
    return ts;
}

std::string fmt_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", t);
    return buf;
}

}  // namespace

LoadResult load_corpus(const CorpusManifest& m, const LoadOptions& options) {
    if (m.frames.empty()) throw std::invalid_argument("manifest has no frame records");
    if (!options.lenient && (m.imu_data.empty() || m.imu_mag.empty())) {
        throw std::invalid_argument("manifest has an empty IMU stream");
    }
    if (options.alignment_tolerance_s < 0.0) throw std::invalid_argument("alignment tolerance must be >= 0");

    for (const auto& f : m.frames) {
        const auto p = std::filesystem::path(f.path).is_absolute() ? std::filesystem::path(f.path) : m.base_dir / f.path;
        if (!std::filesystem::exists(p)) throw std::runtime_error("frame image not found: " + p.string());
    }

    const auto data_ts = timestamps_of(m.imu_data);
    const auto mag_ts = timestamps_of(m.imu_mag);
    const auto label_ts = timestamps_of(m.labels);
    const auto rot_ts = timestamps_of(m.rotations);
    constexpr double kExact = 1e-6;

    LoadResult result;
    for (const auto& f : m.frames) {
        const auto di = nearest_within(data_ts, f.timestamp, options.alignment_tolerance_s);
        const auto mi = nearest_within(mag_ts, f.timestamp, options.alignment_tolerance_s);
        if ((!di || !mi) && !options.lenient) {
            result.warnings.push_back("frame at t=" + fmt_time(f.timestamp) + " has no " +
                                      (!di ? "imu_data" : "imu_mag") + " record within " +
                                      fmt_time(options.alignment_tolerance_s) + " s; skipped");
            continue;
        }
        AlignedSample s;
        s.timestamp = f.timestamp;
        const auto path = std::filesystem::path(f.path).is_absolute() ? std::filesystem::path(f.path) : m.base_dir / f.path;
        Image img = read_netpbm(path);
        if (options.grayscale && img.channels != 1) img = to_grayscale(img);
        if (img.height != kFrameSize || img.width != kFrameSize) img = resize(img, kFrameSize, kFrameSize);
        s.image = std::move(img);
        if (di) s.data = m.imu_data[*di];
        if (mi) s.mag = m.imu_mag[*mi];
        if (const auto li = nearest_within(label_ts, f.timestamp, kExact)) s.label = m.labels[*li].label;
        if (const auto ri = nearest_within(rot_ts, f.timestamp, kExact)) s.rotation_deg = m.rotations[*ri].degrees;
        result.samples.push_back(std::move(s));
    }
    if (result.samples.empty()) throw std::runtime_error("no frame could be aligned with IMU records");
    return result;
}

LoadResult load_corpus(const std::filesystem::path& manifest_path, const LoadOptions& options) {
    return load_corpus(read_manifest(manifest_path), options);
}

}  // namespace skywatch
