#ifndef BNC_IO_HPP
#define BNC_IO_HPP

#include <json.hpp>
#include <filesystem>
#include <string>
#include <vector>

#include "bnc/compensation.hpp"
#include "bnc/hmm.hpp"
#include "bnc/obs_model.hpp"

namespace bnc::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// --- JSON conversions -------------------------------------------------------

json hmm_to_json(const Hmm& hmm);
Hmm hmm_from_json(const nlohmann::json& j);

json obs_model_to_json(const ObservationModelSpec& spec);
ObservationModelSpec obs_model_from_json(const nlohmann::json& j);

json evidence_to_json(const FrameEvidence& ev);
FrameEvidence evidence_from_json(const nlohmann::json& j);

json latents_to_json(const FrameLatents& lat);
FrameLatents latents_from_json(const nlohmann::json& j);

// --- model files -------------------------------------------------------------

struct ModelFile {
  std::vector<Hmm> models;
  json provenance;  // optional object; null when absent
};

void write_model_file(const std::filesystem::path& path, const ModelFile& file);
ModelFile read_model_file(const std::filesystem::path& path);

// --- feature files -----------------------------------------------------------
// CSV: header row dim_0,...,dim_{D-1}, one frame per row. Binary: 16-byte
// header (magic "BNCF", u32 version, u32 D, u32 N, little-endian) followed by
// N*D float32 row-major. Both carry float32 precision and round-trip
// losslessly at that precision.

enum class FeatureFormat { kCsv, kBin };

std::string feature_extension(FeatureFormat fmt);

void write_features(const std::filesystem::path& path,
                    const std::vector<Eigen::VectorXd>& frames,
                    FeatureFormat fmt);
/// Format detected from the file's magic/extension.
std::vector<Eigen::VectorXd> read_features(const std::filesystem::path& path);

/// Rounds every entry through float32, matching what the feature files store.
std::vector<Eigen::VectorXd> quantize_to_float32(
    const std::vector<Eigen::VectorXd>& frames);

// --- small JSON helpers (shared by harness) ----------------------------------

json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace bnc::io

#endif  // BNC_IO_HPP
