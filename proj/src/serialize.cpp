#include "skywatch/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace skywatch {

using nlohmann::json;

namespace {

template <typename U>
void put(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
   public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        U value = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return value;
    }

    std::string take(std::size_t n) {
        need(n);
        std::string out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    bool done() const { return pos_ == bytes_.size(); }

   private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw ModelFormatError("truncated model file: needed " + std::to_string(n) + " bytes at offset " +
                                   std::to_string(pos_) + ", " + std::to_string(bytes_.size() - pos_) + " left");
        }
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::vector<TensorRecord> records_of(const std::vector<Tensor>& params) {
    std::vector<TensorRecord> out;
    for (const auto& p : params) out.push_back({p.shape(), {p.data().begin(), p.data().end()}});
    return out;
}

void load_into(const std::vector<TensorRecord>& records, std::size_t offset, std::vector<Tensor> params,
               const std::string& what) {
    if (records.size() < offset + params.size()) {
        throw ModelFormatError(what + ": expected " + std::to_string(params.size()) + " tensors, file has " +
                               std::to_string(records.size() - std::min(offset, records.size())));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& rec = records[offset + i];
        if (rec.shape != params[i].shape()) {
            throw ModelFormatError(what + ": tensor " + std::to_string(i) + " has shape " + shape_to_string(rec.shape) +
                                   ", model expects " + shape_to_string(params[i].shape()));
        }
        std::copy(rec.values.begin(), rec.values.end(), params[i].data().begin());
    }
}

void expect_kind(const ModelFile& file, const std::string& kind, const std::filesystem::path& path) {
    const auto found = file.metadata.value("kind", std::string("<none>"));
    if (found != kind) {
        throw ModelFormatError(path.string() + " holds a '" + found + "' model, expected '" + kind + "'");
    }
}

json to_json(const AutoencoderConfig& c) { return {{"input", c.input}, {"encoder", c.encoder}, {"bottleneck", c.bottleneck}}; }

AutoencoderConfig ae_config_from_json(const json& j) {
    AutoencoderConfig c;
    c.input = j.at("input").get<std::size_t>();
    c.encoder = j.at("encoder").get<std::vector<std::size_t>>();
    c.bottleneck = j.at("bottleneck").get<std::size_t>();
    return c;
}

json to_json(const Normalizer& n) { return {{"min", n.min()}, {"max", n.max()}}; }

Normalizer normalizer_from_json(const json& j) {
    return Normalizer(j.at("min").get<std::vector<double>>(), j.at("max").get<std::vector<double>>());
}

}  // namespace

std::string encode_model(const ModelFile& file) {
    std::string out(kModelMagic, kModelMagic + 4);
    put<std::uint32_t>(out, kModelFormatVersion);
    const std::string meta = file.metadata.dump();
    put<std::uint64_t>(out, meta.size());
    out += meta;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
        if (shape_numel(t.shape) != t.values.size()) {
            throw std::invalid_argument("tensor record shape " + shape_to_string(t.shape) + " does not match " +
                                        std::to_string(t.values.size()) + " values");
        }
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) put<std::uint64_t>(out, d);
        for (float v : t.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

ModelFile decode_model(const std::string& bytes) {
    Reader in(bytes);
    const std::string magic = in.take(4);
    if (std::memcmp(magic.data(), kModelMagic, 4) != 0) throw ModelFormatError("not a model file (bad magic)");
    const auto version = in.get<std::uint32_t>();
    if (version != kModelFormatVersion) {
        throw ModelFormatError("unsupported model file version " + std::to_string(version) + " (this build reads version " +
                               std::to_string(kModelFormatVersion) + ")");
    }
    ModelFile file;
    const auto meta_len = in.get<std::uint64_t>();
    try {
        file.metadata = json::parse(in.take(meta_len));
    } catch (const json::parse_error& e) {
        throw ModelFormatError(std::string("corrupt model metadata: ") + e.what());
    }
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord rec;
        const auto rank = in.get<std::uint32_t>();
        if (rank > 8) throw ModelFormatError("tensor " + std::to_string(i) + " has implausible rank " + std::to_string(rank));
        for (std::uint32_t r = 0; r < rank; ++r) rec.shape.push_back(in.get<std::uint64_t>());
        const std::size_t n = shape_numel(rec.shape);
        if (n > bytes.size()) throw ModelFormatError("truncated model file: tensor " + std::to_string(i) + " too large");
        rec.values.resize(n);
        for (auto& v : rec.values) v = std::bit_cast<float>(in.get<std::uint32_t>());
        file.tensors.push_back(std::move(rec));
    }
    if (!in.done()) throw ModelFormatError("trailing bytes after the last tensor record");
    return file;
}

void save_model_file(const std::filesystem::path& path, const ModelFile& file) {
    const std::string bytes = encode_model(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

ModelFile load_model_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_model(bytes);
    } catch (const ModelFormatError& e) {
        throw ModelFormatError(path.string() + ": " + e.what());
    }
}

json to_json(const AngleNetConfig& c) {
    return {{"input_size", c.input_size},     {"channels", c.channels},       {"branch_widths", c.branch_widths},
            {"fusion_width", c.fusion_width}, {"hidden", c.hidden},           {"kernel_size", c.kernel_size},
            {"threshold_deg", c.threshold_deg}};
}

AngleNetConfig angle_config_from_json(const json& j) {
    AngleNetConfig c;
    c.input_size = j.at("input_size").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.branch_widths = j.at("branch_widths").get<std::vector<std::size_t>>();
    c.fusion_width = j.at("fusion_width").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::array<std::size_t, 2>>();
    c.kernel_size = j.at("kernel_size").get<std::size_t>();
    c.threshold_deg = j.at("threshold_deg").get<double>();
    return c;
}

void save_anglenet(const std::filesystem::path& path, const AngleNet& model) {
    ModelFile file;
    file.metadata = {{"kind", "anglenet"}, {"config", to_json(model.config())}, {"tensors", model.parameter_names()}};
    file.tensors = records_of(model.parameters());
    save_model_file(path, file);
}

AngleNet load_anglenet(const std::filesystem::path& path) {
    const ModelFile file = load_model_file(path);
    expect_kind(file, "anglenet", path);
    try {
        AngleNet model(angle_config_from_json(file.metadata.at("config")), 0);
        const auto params = model.parameters();
        if (file.tensors.size() != params.size()) {
            throw ModelFormatError("expected " + std::to_string(params.size()) + " tensors, file has " +
                                   std::to_string(file.tensors.size()));
        }
        load_into(file.tensors, 0, params, "anglenet");
        return model;
    } catch (const json::exception& e) {
        throw ModelFormatError(path.string() + ": bad anglenet metadata: " + e.what());
    }
}

void save_imu_detector(const std::filesystem::path& path, const ImuDetector& d) {
    ModelFile file;
    file.metadata = {{"kind", "imu"},
                     {"data_config", to_json(d.data_model.config())},
                     {"mag_config", to_json(d.mag_model.config())},
                     {"data_normalizer", to_json(d.data_normalizer)},
                     {"mag_normalizer", to_json(d.mag_normalizer)},
                     {"calibration",
                      {{"max_data_loss", d.calibration.max_data_loss}, {"max_mag_loss", d.calibration.max_mag_loss}}}};
    file.tensors = records_of(d.data_model.parameters());
    const auto mag = records_of(d.mag_model.parameters());
    file.tensors.insert(file.tensors.end(), mag.begin(), mag.end());
    save_model_file(path, file);
}

ImuDetector load_imu_detector(const std::filesystem::path& path) {
    const ModelFile file = load_model_file(path);
    expect_kind(file, "imu", path);
    try {
        const auto& m = file.metadata;
        ImuDetector d{normalizer_from_json(m.at("data_normalizer")),
                      normalizer_from_json(m.at("mag_normalizer")),
                      Autoencoder(ae_config_from_json(m.at("data_config")), 0),
                      Autoencoder(ae_config_from_json(m.at("mag_config")), 0),
                      {m.at("calibration").at("max_data_loss").get<double>(),
                       m.at("calibration").at("max_mag_loss").get<double>()}};
        const auto data_params = d.data_model.parameters();
        const auto mag_params = d.mag_model.parameters();
        if (file.tensors.size() != data_params.size() + mag_params.size()) {
            throw ModelFormatError(path.string() + ": expected " +
                                   std::to_string(data_params.size() + mag_params.size()) + " tensors, file has " +
                                   std::to_string(file.tensors.size()));
        }
        load_into(file.tensors, 0, data_params, "imu data autoencoder");
        load_into(file.tensors, data_params.size(), mag_params, "imu mag autoencoder");
        return d;
    } catch (const json::exception& e) {
        throw ModelFormatError(path.string() + ": bad imu metadata: " + e.what());
    }
}

}  // namespace skywatch
