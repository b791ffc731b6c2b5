#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "skywatch/anglenet.hpp"
#include "skywatch/imu.hpp"

namespace skywatch {

/// Weight file layout (all integers little-endian):
///
///   "SKYW"            4-byte magic
///   u32 version
///   u64 n, n bytes    JSON metadata (kind, config, normalizers, calibration)
///   u32 tensor count
///   per tensor: u32 rank, rank x u64 dims, product(dims) x f32
inline constexpr char kModelMagic[4] = {'S', 'K', 'Y', 'W'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct TensorRecord {
    Shape shape;
    std::vector<float> values;
    bool operator==(const TensorRecord&) const = default;
};

struct ModelFile {
    nlohmann::json metadata;
    std::vector<TensorRecord> tensors;
};

std::string encode_model(const ModelFile& file);
/// Parses a complete buffer; rejects bad magic, unknown versions, truncation
/// and trailing bytes.
ModelFile decode_model(const std::string& bytes);

void save_model_file(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model_file(const std::filesystem::path& path);

nlohmann::json to_json(const AngleNetConfig& config);
AngleNetConfig angle_config_from_json(const nlohmann::json& j);

void save_anglenet(const std::filesystem::path& path, const AngleNet& model);
AngleNet load_anglenet(const std::filesystem::path& path);

void save_imu_detector(const std::filesystem::path& path, const ImuDetector& detector);
ImuDetector load_imu_detector(const std::filesystem::path& path);

}  // namespace skywatch
