#include "hebb/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace hebb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void to_little_endian(char* bytes, std::size_t count) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < count; ++i) std::reverse(bytes + 8 * i, bytes + 8 * i + 8);
    } else {
        (void)bytes;
        (void)count;
    }
}

fs::path blob_path(const fs::path& manifest, const std::string& name) {
    return manifest.parent_path() / (manifest.stem().string() + "." + name + ".f64");
}

json blob_entry(const fs::path& manifest, const std::string& name, const Mat& m) {
    write_blob(blob_path(manifest, name), m);
    return {{"file", blob_path(manifest, name).filename().string()}, {"rows", m.rows()}, {"cols", m.cols()}};
}

Mat load_entry(const fs::path& manifest, const json& entry) {
    return read_blob(manifest.parent_path() / entry.at("file").get<std::string>(), entry.at("rows").get<Eigen::Index>(),
                     entry.at("cols").get<Eigen::Index>());
}

}  // namespace

void write_blob(const fs::path& file, const Mat& m) {
    std::vector<char> bytes(static_cast<std::size_t>(m.size()) * 8);
    if (!bytes.empty()) std::memcpy(bytes.data(), m.data(), bytes.size());
    to_little_endian(bytes.data(), static_cast<std::size_t>(m.size()));
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw FormatError("cannot write blob " + file.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Mat read_blob(const fs::path& file, Eigen::Index rows, Eigen::Index cols) {
    std::ifstream in(file, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cannot open blob " + file.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    const auto expected = static_cast<std::size_t>(rows * cols) * 8;
    if (size != expected)
        throw FormatError("blob " + file.string() + " has " + std::to_string(size) + " bytes, expected " +
                          std::to_string(expected));
    in.seekg(0);
    std::vector<char> bytes(size);
    in.read(bytes.data(), static_cast<std::streamsize>(size));
    to_little_endian(bytes.data(), size / 8);
    Mat m(rows, cols);
    if (size > 0) std::memcpy(m.data(), bytes.data(), size);
    return m;
}

json to_json(const RuleConfig& c) {
    return {{"p", c.p},
            {"k", c.k},
            {"delta", c.delta},
            {"eta", c.eta},
            {"radius", c.radius},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"hidden_units", c.hidden_units},
            {"scaling", c.scaling == UpdateScaling::mean ? "mean" : "max_abs"},
            {"init_std", c.init_std},
            {"seed", c.seed}};
}

RuleConfig rule_config_from_json(const json& j) {
    RuleConfig c;
    c.p = j.at("p").get<double>();
    c.k = j.at("k").get<int>();
    c.delta = j.at("delta").get<double>();
    c.eta = j.at("eta").get<double>();
    c.radius = j.at("radius").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.hidden_units = j.at("hidden_units").get<int>();
    c.scaling = j.at("scaling").get<std::string>() == "mean" ? UpdateScaling::mean : UpdateScaling::max_abs;
    c.init_std = j.at("init_std").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void save_synapses(const fs::path& manifest, const SynapseMatrix& s, const json& extra) {
    json j = extra;
    j["kind"] = "synapses";
    j["config"] = to_json(s.config);
    j["trained_epochs"] = s.trained_epochs;
    j["shape"] = {s.S.rows(), s.S.cols()};
    j["blobs"] = {{"S", blob_entry(manifest, "S", s.S)}};
    write_json(manifest, j);
}

SynapseMatrix load_synapses(const fs::path& manifest) {
    const json j = read_json(manifest);
    if (j.value("kind", "") != "synapses") throw FormatError(manifest.string() + " is not a synapse checkpoint");
    SynapseMatrix s;
    try {
        s.config = rule_config_from_json(j.at("config"));
        s.trained_epochs = j.at("trained_epochs").get<int>();
        s.S = load_entry(manifest, j.at("blobs").at("S"));
    } catch (const json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    return s;
}

void save_model(const fs::path& manifest, const EncoderDecoderModel& m, const json& extra) {
    json j = extra;
    j["kind"] = "model";
    j["act_power"] = m.act_power;
    j["frozen_encoder"] = m.frozen_encoder;
    j["shape"] = {{"input", m.input_dim()}, {"hidden", m.hidden_dim()}, {"classes", m.num_classes()}};
    j["blobs"] = {{"W", blob_entry(manifest, "W", m.W)},
                  {"A", blob_entry(manifest, "A", m.A)},
                  {"b", blob_entry(manifest, "b", Mat(m.b.transpose()))}};
    write_json(manifest, j);
}

EncoderDecoderModel load_model(const fs::path& manifest) {
    const json j = read_json(manifest);
    if (j.value("kind", "") != "model") throw FormatError(manifest.string() + " is not a model checkpoint");
    EncoderDecoderModel m;
    try {
        m.act_power = j.at("act_power").get<double>();
        m.frozen_encoder = j.at("frozen_encoder").get<bool>();
        const auto& blobs = j.at("blobs");
        m.W = load_entry(manifest, blobs.at("W"));
        m.A = load_entry(manifest, blobs.at("A"));
        m.b = load_entry(manifest, blobs.at("b")).row(0).transpose();
    } catch (const json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

json read_json(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("cannot open " + file.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

void write_json(const fs::path& file, const json& j) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw FormatError("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

}  // namespace hebb
