#include "bnc/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bnc/errors.hpp"

namespace bnc::io {

namespace {

constexpr char kBncfMagic[4] = {'B', 'N', 'C', 'F'};

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

double get_number(const nlohmann::json& j, const char* what) {
  if (!j.is_number()) fail(std::string(what) + ": expected a number");
  return j.get<double>();
}

DiagGaussianParam param_from_json(const nlohmann::json& j) {
  return DiagGaussianParam{vector_from_json(j.at("mean")),
                           vector_from_json(j.at("var"))};
}

json param_to_json(const DiagGaussianParam& p) {
  json j;
  j["mean"] = vector_to_json(p.mean);
  j["var"] = vector_to_json(p.var);
  return j;
}

Gaussian gaussian_from_json(const nlohmann::json& j) {
  Eigen::VectorXd mean = vector_from_json(j.at("mean"));
  if (j.contains("cov")) return Gaussian(std::move(mean), matrix_from_json(j.at("cov")));
  return Gaussian(std::move(mean), vector_from_json(j.at("var")));
}

json gaussian_to_json(const Gaussian& g) {
  json j;
  j["mean"] = vector_to_json(g.mean());
  if (g.is_diagonal())
    j["var"] = vector_to_json(g.diag_var());
  else
    j["cov"] = matrix_to_json(g.full_cov());
  return j;
}

}  // namespace

json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail("expected a JSON array of numbers");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = get_number(j[i], "vector entry");
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) fail("expected a JSON array of rows");
  const size_t cols = j[0].size();
  Eigen::MatrixXd m(j.size(), cols);
  for (size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) fail("ragged matrix rows");
    for (size_t c = 0; c < cols; ++c)
      m(r, c) = get_number(j[r][c], "matrix entry");
  }
  return m;
}

json hmm_to_json(const Hmm& hmm) {
  json j;
  j["model_id"] = hmm.model_id;
  j["dim"] = hmm.dim();
  j["initial"] = vector_to_json(hmm.initial);
  j["transitions"] = matrix_to_json(hmm.transitions);
  json states = json::array();
  for (const auto& gmm : hmm.emissions) {
    json s;
    s["weights"] = vector_to_json(gmm.weights);
    json comps = json::array();
    for (const auto& c : gmm.components) comps.push_back(gaussian_to_json(c));
    s["components"] = std::move(comps);
    states.push_back(std::move(s));
  }
  j["states"] = std::move(states);
  return j;
}

Hmm hmm_from_json(const nlohmann::json& j) {
  Hmm hmm;
  hmm.model_id = j.value("model_id", std::string{});
  hmm.initial = vector_from_json(j.at("initial"));
  hmm.transitions = matrix_from_json(j.at("transitions"));
  for (const auto& s : j.at("states")) {
    Gmm gmm;
    gmm.weights = vector_from_json(s.at("weights"));
    for (const auto& c : s.at("components"))
      gmm.components.push_back(gaussian_from_json(c));
    hmm.emissions.push_back(std::move(gmm));
  }
  hmm.validate();
  return hmm;
}

json obs_model_to_json(const ObservationModelSpec& spec) {
  json j;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AdditiveGaussianModel>) {
          j["family"] = "additive_gaussian";
          j["bias_mean"] = vector_to_json(m.bias_mean);
          j["bias_var"] = vector_to_json(m.bias_var);
          if (!m.track.empty()) {
            json track = json::array();
            for (const auto& t : m.track) {
              json e;
              e["mean"] = vector_to_json(t.mean);
              e["var"] = vector_to_json(t.var);
              track.push_back(std::move(e));
            }
            j["track"] = std::move(track);
          }
        } else if constexpr (std::is_same_v<T, AffineModel>) {
          j["family"] = "affine";
          json classes = json::array();
          for (const auto& c : m.classes) {
            json e;
            e["transform"] = matrix_to_json(c.transform);
            e["bias_mean"] = vector_to_json(c.bias_mean);
            e["bias_var"] = vector_to_json(c.bias_var);
            classes.push_back(std::move(e));
          }
          j["classes"] = std::move(classes);
          if (!m.class_of_component.empty())
            j["class_of_component"] = m.class_of_component;
        } else if constexpr (std::is_same_v<T, AlgonquinModel>) {
          j["family"] = "algonquin";
          json track = json::array();
          for (const auto& r : m.noise_estimate) track.push_back(vector_to_json(r));
          j["noise_estimate"] = std::move(track);
          j["residual_var"] = vector_to_json(m.residual_var);
        } else if constexpr (std::is_same_v<T, SpliceRegionsModel>) {
          j["family"] = "splice";
          j["priors"] = vector_to_json(m.priors);
          json offs = json::array(), vars = json::array();
          for (const auto& r : m.offsets) offs.push_back(vector_to_json(r));
          for (const auto& g : m.region_var) vars.push_back(vector_to_json(g));
          j["offsets"] = std::move(offs);
          j["region_var"] = std::move(vars);
          if (m.y_prior) {
            json prior = json::array();
            for (const auto& g : *m.y_prior) prior.push_back(gaussian_to_json(g));
            j["y_prior"] = std::move(prior);
          }
        } else if constexpr (std::is_same_v<T, PmcLogSumModel>) {
          j["family"] = "pmc_log_sum";
          j["alpha"] = m.level_alpha;
          if (m.noise) j["noise"] = param_to_json(*m.noise);
          if (m.noise_hmm) j["noise_hmm"] = hmm_to_json(*m.noise_hmm);
        } else if constexpr (std::is_same_v<T, VtsLogSumModel>) {
          j["family"] = "vts_log_sum";
          j["conv"] = param_to_json(m.conv);
          if (m.noise) j["noise"] = param_to_json(*m.noise);
        } else if constexpr (std::is_same_v<T, RemosLogSumModel>) {
          j["family"] = "remos_log_sum";
          j["noise"] = param_to_json(m.noise);
          j["conv"] = param_to_json(m.conv);
          j["tail_gain"] = param_to_json(m.tail_gain);
          json tail = json::array();
          for (const auto& t : m.tail) tail.push_back(vector_to_json(t));
          j["tail"] = std::move(tail);
        } else if constexpr (std::is_same_v<T, ReverbLogSumModel>) {
          j["family"] = "reverb_log_sum";
          json taps = json::array();
          for (const auto& t : m.taps) taps.push_back(vector_to_json(t));
          j["taps"] = std::move(taps);
          if (m.noise) j["noise"] = param_to_json(*m.noise);
        } else if constexpr (std::is_same_v<T, TakiguchiARModel>) {
          j["family"] = "takiguchi_ar";
          j["conv"] = vector_to_json(m.conv);
          if (m.tail_weight) j["tail_weight"] = vector_to_json(*m.tail_weight);
        }
      },
      spec);
  return j;
}

ObservationModelSpec obs_model_from_json(const nlohmann::json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "additive_gaussian") {
    AdditiveGaussianModel m;
    m.bias_mean = vector_from_json(j.at("bias_mean"));
    m.bias_var = vector_from_json(j.at("bias_var"));
    if (j.contains("track"))
      for (const auto& t : j.at("track"))
        m.track.push_back(BiasTrack{vector_from_json(t.at("mean")),
                                    vector_from_json(t.at("var"))});
    return m;
  }
  if (family == "affine") {
    AffineModel m;
    for (const auto& c : j.at("classes"))
      m.classes.push_back(AffineClass{matrix_from_json(c.at("transform")),
                                      vector_from_json(c.at("bias_mean")),
                                      vector_from_json(c.at("bias_var"))});
    if (j.contains("class_of_component"))
      m.class_of_component = j.at("class_of_component").get<std::vector<int>>();
    return m;
  }
  if (family == "algonquin") {
    AlgonquinModel m;
    for (const auto& r : j.at("noise_estimate"))
      m.noise_estimate.push_back(vector_from_json(r));
    m.residual_var = vector_from_json(j.at("residual_var"));
    return m;
  }
  if (family == "splice") {
    SpliceRegionsModel m;
    m.priors = vector_from_json(j.at("priors"));
    for (const auto& r : j.at("offsets")) m.offsets.push_back(vector_from_json(r));
    for (const auto& g : j.at("region_var"))
      m.region_var.push_back(vector_from_json(g));
    if (j.contains("y_prior")) {
      std::vector<Gaussian> prior;
      for (const auto& g : j.at("y_prior")) prior.push_back(gaussian_from_json(g));
      m.y_prior = std::move(prior);
    }
    return m;
  }
  if (family == "pmc_log_sum") {
    PmcLogSumModel m;
    m.level_alpha = j.value("alpha", 1.0);
    if (j.contains("noise")) m.noise = param_from_json(j.at("noise"));
    if (j.contains("noise_hmm")) m.noise_hmm = hmm_from_json(j.at("noise_hmm"));
    return m;
  }
  if (family == "vts_log_sum") {
    VtsLogSumModel m;
    m.conv = param_from_json(j.at("conv"));
    if (j.contains("noise")) m.noise = param_from_json(j.at("noise"));
    return m;
  }
  if (family == "remos_log_sum") {
    RemosLogSumModel m;
    m.noise = param_from_json(j.at("noise"));
    m.conv = param_from_json(j.at("conv"));
    m.tail_gain = param_from_json(j.at("tail_gain"));
    for (const auto& t : j.at("tail")) m.tail.push_back(vector_from_json(t));
    return m;
  }
  if (family == "reverb_log_sum") {
    ReverbLogSumModel m;
    for (const auto& t : j.at("taps")) m.taps.push_back(vector_from_json(t));
    if (j.contains("noise")) m.noise = param_from_json(j.at("noise"));
    return m;
  }
  if (family == "takiguchi_ar") {
    TakiguchiARModel m;
    m.conv = vector_from_json(j.at("conv"));
    if (j.contains("tail_weight"))
      m.tail_weight = vector_from_json(j.at("tail_weight"));
    return m;
  }
  fail("unknown observation model family: " + family);
}

json evidence_to_json(const FrameEvidence& ev) {
  json j;
  j["y"] = vector_to_json(ev.observed);
  if (ev.bias) {
    j["bias"] = json{{"mean", vector_to_json(ev.bias->mean)},
                     {"var", vector_to_json(ev.bias->var)}};
  }
  if (ev.posterior) {
    j["posterior"] = json{{"mean", vector_to_json(ev.posterior->mean)},
                          {"var", vector_to_json(ev.posterior->var)}};
  }
  if (ev.reliability) {
    json r;
    json mask = json::array();
    for (bool b : ev.reliability->reliable) mask.push_back(b ? 1 : 0);
    r["mask"] = std::move(mask);
    if (ev.reliability->imputed)
      r["imputed"] = vector_to_json(*ev.reliability->imputed);
    j["reliability"] = std::move(r);
  }
  if (ev.region_posterior)
    j["region_posterior"] = vector_to_json(*ev.region_posterior);
  return j;
}

FrameEvidence evidence_from_json(const nlohmann::json& j) {
  FrameEvidence ev;
  ev.observed = vector_from_json(j.at("y"));
  if (j.contains("bias"))
    ev.bias = BiasTrack{vector_from_json(j.at("bias").at("mean")),
                        vector_from_json(j.at("bias").at("var"))};
  if (j.contains("posterior"))
    ev.posterior = PosteriorTrack{vector_from_json(j.at("posterior").at("mean")),
                                  vector_from_json(j.at("posterior").at("var"))};
  if (j.contains("reliability")) {
    Reliability rel;
    for (const auto& b : j.at("reliability").at("mask"))
      rel.reliable.push_back(b.get<int>() != 0);
    if (j.at("reliability").contains("imputed"))
      rel.imputed = vector_from_json(j.at("reliability").at("imputed"));
    ev.reliability = std::move(rel);
  }
  if (j.contains("region_posterior"))
    ev.region_posterior = vector_from_json(j.at("region_posterior"));
  ev.validate();
  return ev;
}

json latents_to_json(const FrameLatents& lat) {
  json j;
  j["frame"] = lat.frame;
  if (lat.component >= 0) j["component"] = lat.component;
  if (lat.region >= 0) j["region"] = lat.region;
  if (lat.noise_state >= 0) j["noise_state"] = lat.noise_state;
  if (lat.bias) j["bias"] = vector_to_json(*lat.bias);
  if (lat.conv) j["conv"] = vector_to_json(*lat.conv);
  if (lat.noise) j["noise"] = vector_to_json(*lat.noise);
  if (lat.tail_gain) j["tail_gain"] = vector_to_json(*lat.tail_gain);
  return j;
}

FrameLatents latents_from_json(const nlohmann::json& j) {
  FrameLatents lat;
  lat.frame = j.value("frame", 0);
  lat.component = j.value("component", -1);
  lat.region = j.value("region", -1);
  lat.noise_state = j.value("noise_state", -1);
  if (j.contains("bias")) lat.bias = vector_from_json(j.at("bias"));
  if (j.contains("conv")) lat.conv = vector_from_json(j.at("conv"));
  if (j.contains("noise")) lat.noise = vector_from_json(j.at("noise"));
  if (j.contains("tail_gain")) lat.tail_gain = vector_from_json(j.at("tail_gain"));
  return lat;
}

void write_model_file(const std::filesystem::path& path, const ModelFile& file) {
  json j;
  j["schema_version"] = kSchemaVersion;
  json models = json::array();
  for (const auto& m : file.models) models.push_back(hmm_to_json(m));
  j["models"] = std::move(models);
  if (!file.provenance.is_null()) j["provenance"] = file.provenance;
  write_json_file(path, j);
}

ModelFile read_model_file(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  if (j.value("schema_version", -1) != kSchemaVersion)
    fail("model file: unsupported schema_version");
  ModelFile file;
  for (const auto& m : j.at("models")) file.models.push_back(hmm_from_json(m));
  if (j.contains("provenance")) file.provenance = j.at("provenance");
  return file;
}

std::string feature_extension(FeatureFormat fmt) {
  return fmt == FeatureFormat::kCsv ? ".csv" : ".bncf";
}

std::vector<Eigen::VectorXd> quantize_to_float32(
    const std::vector<Eigen::VectorXd>& frames) {
  std::vector<Eigen::VectorXd> out = frames;
  for (auto& f : out)
    for (Eigen::Index d = 0; d < f.size(); ++d)
      f[d] = static_cast<double>(static_cast<float>(f[d]));
  return out;
}

namespace {

void write_features_csv(const std::filesystem::path& path,
                        const std::vector<Eigen::VectorXd>& frames) {
  std::ostringstream out;
  const int dim = static_cast<int>(frames.front().size());
  for (int d = 0; d < dim; ++d) out << (d ? "," : "") << "dim_" << d;
  out << "\n";
  char buf[64];
  for (const auto& f : frames) {
    for (int d = 0; d < dim; ++d) {
      // %.9g round-trips float32 exactly.
      std::snprintf(buf, sizeof buf, "%.9g",
                    static_cast<double>(static_cast<float>(f[d])));
      out << (d ? "," : "") << buf;
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::vector<Eigen::VectorXd> read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open feature file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("dim_0", 0) != 0)
    fail("feature CSV: missing dim_0 header in " + path.string());
  std::vector<Eigen::VectorXd> frames;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    // The file carries float32 precision; quantize so CSV and binary reads
    // yield identical doubles.
    while (std::getline(ss, cell, ','))
      vals.push_back(static_cast<double>(static_cast<float>(std::stod(cell))));
    Eigen::VectorXd f(vals.size());
    for (size_t d = 0; d < vals.size(); ++d) f[d] = vals[d];
    frames.push_back(std::move(f));
  }
  if (frames.empty()) fail("feature CSV: no frames in " + path.string());
  return frames;
}

void write_features_bncf(const std::filesystem::path& path,
                         const std::vector<Eigen::VectorXd>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write feature file: " + path.string());
  const uint32_t version = kSchemaVersion;
  const uint32_t dim = static_cast<uint32_t>(frames.front().size());
  const uint32_t count = static_cast<uint32_t>(frames.size());
  out.write(kBncfMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& f : frames)
    for (uint32_t d = 0; d < dim; ++d) {
      const float v = static_cast<float>(f[d]);
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
}

std::vector<Eigen::VectorXd> read_features_bncf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open feature file: " + path.string());
  char magic[4];
  uint32_t version = 0, dim = 0, count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || std::memcmp(magic, kBncfMagic, 4) != 0)
    fail("feature binary: bad magic in " + path.string());
  if (version != static_cast<uint32_t>(kSchemaVersion))
    fail("feature binary: unsupported version");
  std::vector<Eigen::VectorXd> frames(count, Eigen::VectorXd(dim));
  for (uint32_t n = 0; n < count; ++n)
    for (uint32_t d = 0; d < dim; ++d) {
      float v = 0;
      in.read(reinterpret_cast<char*>(&v), 4);
      frames[n][d] = static_cast<double>(v);
    }
  if (!in) fail("feature binary: truncated file " + path.string());
  return frames;
}

}  // namespace

void write_features(const std::filesystem::path& path,
                    const std::vector<Eigen::VectorXd>& frames,
                    FeatureFormat fmt) {
  if (frames.empty()) fail("write_features: no frames");
  if (fmt == FeatureFormat::kCsv)
    write_features_csv(path, frames);
  else
    write_features_bncf(path, frames);
}

std::vector<Eigen::VectorXd> read_features(const std::filesystem::path& path) {
  if (path.extension() == ".bncf") return read_features_bncf(path);
  return read_features_csv(path);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write file: " + path.string());
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail("JSON parse error in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace bnc::io
