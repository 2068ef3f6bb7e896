#pragma once

#include "hebb/localrule.hpp"
#include "hebb/model.hpp"
#include "hebb/types.hpp"

#include <json.hpp>

#include <filesystem>

namespace hebb {

/// Raw little-endian float64, row-major.
void write_blob(const std::filesystem::path& file, const Mat& m);
Mat read_blob(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols);

nlohmann::json to_json(const RuleConfig& config);
RuleConfig rule_config_from_json(const nlohmann::json& j);

/// `manifest` is a .json path; the S blob is written beside it as <stem>.S.f64.
void save_synapses(const std::filesystem::path& manifest, const SynapseMatrix& synapses,
                   const nlohmann::json& extra = nlohmann::json::object());
SynapseMatrix load_synapses(const std::filesystem::path& manifest);

/// Blobs W, A, b beside the manifest. `extra` is merged into the manifest (e.g. training settings).
void save_model(const std::filesystem::path& manifest, const EncoderDecoderModel& model,
                const nlohmann::json& extra = nlohmann::json::object());
EncoderDecoderModel load_model(const std::filesystem::path& manifest);

nlohmann::json read_json(const std::filesystem::path& file);
void write_json(const std::filesystem::path& file, const nlohmann::json& j);

}  // namespace hebb
