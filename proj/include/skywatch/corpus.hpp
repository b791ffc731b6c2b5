#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skywatch/image.hpp"
#include "skywatch/imu.hpp"
#include "skywatch/types.hpp"

namespace skywatch {

struct FrameRecord {
    double timestamp = 0.0;
    std::string path;  // relative to the manifest directory unless absolute
};

struct LabelRecord {
    double timestamp = 0.0;
    Label label = Label::kNormal;
};

struct RotationRecord {
    double timestamp = 0.0;
    double degrees = 0.0;
};

/// Line-oriented corpus description. One record per line:
///
///   frame    <t> <path>
///   imu_data <t> <qw> <qx> <qy> <qz> <wx> <wy> <wz> <ax> <ay> <az>
///   imu_mag  <t> <mx> <my> <mz>
///   label    <t> normal|abnormal
///   rotation <t> <degrees>          (optional ground truth)
///
/// '#' starts a comment. Timestamps are non-decreasing within each stream.
struct CorpusManifest {
    std::filesystem::path base_dir;
    std::vector<FrameRecord> frames;
    std::vector<ImuDataSample> imu_data;
    std::vector<ImuMagSample> imu_mag;
    std::vector<LabelRecord> labels;
    std::vector<RotationRecord> rotations;

    bool has_abnormal_label() const;
};

/// Thrown for malformed manifests; what() includes "line N".
class ManifestError : public std::runtime_error {
   public:
    ManifestError(const std::string& source, std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }

   private:
    std::size_t line_;
};

CorpusManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                              const std::string& source = "<manifest>");
CorpusManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);

struct AlignedSample {
    double timestamp = 0.0;
    Image image;
    std::optional<ImuDataSample> data;
    std::optional<ImuMagSample> mag;
    std::optional<Label> label;
    std::optional<double> rotation_deg;
};

struct LoadOptions {
    double alignment_tolerance_s = 0.05;
    /// Keep frames that lack an in-tolerance IMU partner (missing modality).
    bool lenient = false;
    bool grayscale = true;
};

struct LoadResult {
    std::vector<AlignedSample> samples;
    std::vector<std::string> warnings;
};

/// Index of the record nearest to t within tolerance, or nullopt. Ties go to
/// the earlier record. `timestamps` must be sorted.
std::optional<std::size_t> nearest_within(const std::vector<double>& timestamps, double t, double tolerance);

/// Pairs every frame with its nearest IMU/data and IMU/mag records. Frames
/// are converted to [0,1] (grayscale by default) and resized to 64x64.
LoadResult load_corpus(const CorpusManifest& manifest, const LoadOptions& options = {});
LoadResult load_corpus(const std::filesystem::path& manifest_path, const LoadOptions& options = {});

}  // namespace skywatch
