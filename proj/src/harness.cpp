#include "bnc/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "bnc/decode.hpp"
#include "bnc/errors.hpp"
#include "bnc/rng.hpp"

namespace bnc::harness {

namespace fs = std::filesystem;
using io::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

std::string trial_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial_%04d", id);
  return buf;
}

const std::vector<std::string> kTechniques = {
    "none",          "arrowood",        "dvc",
    "splice.convolution", "splice.prior_model", "jud",
    "ion",           "mf.imputation",   "mf.marginalization",
    "modified_imputation", "significance",
    "pmc.log_add",   "pmc.log_normal",  "pmc.quadrature", "pmc.noise_hmm",
    "vts",           "cmllr",           "mllr",
    "map",           "bayesian_mllr",   "rev_vts",
    "reverb.static_prior", "reverb.partial_path", "takiguchi",
};

template <typename T>
const T* spec_as(const ObservationModelSpec* spec) {
  return spec ? std::get_if<T>(spec) : nullptr;
}

// Observation-model parameters for a technique: an explicit params object
// wins, otherwise the config's observation model must be of the right family.
template <typename T>
T technique_model(const nlohmann::json& params, const char* key,
                  const TechniqueContext& ctx, const char* id) {
  if (params.is_object() && params.contains(key)) {
    const ObservationModelSpec spec = io::obs_model_from_json(params.at(key));
    if (const T* m = std::get_if<T>(&spec)) return *m;
    fail(std::string(id) + ": params." + key + " is not the expected family");
  }
  if (const T* m = spec_as<T>(ctx.obs_model)) return *m;
  fail(std::string(id) + ": no " + key +
       " parameters (neither in params nor the observation model)");
}

RegressionAssignment assignment_from(const nlohmann::json& params,
                                     const TechniqueContext& ctx,
                                     const Hmm& model, const char* id) {
  if (params.is_object() && params.contains("classes")) {
    RegressionAssignment a;
    for (const auto& c : params.at("classes"))
      a.classes.push_back(RegressionClass{io::matrix_from_json(c.at("transform")),
                                          io::vector_from_json(c.at("bias_mean")),
                                          io::vector_from_json(c.at("bias_var"))});
    if (params.contains("class_of")) {
      for (const auto& row : params.at("class_of"))
        a.class_of.push_back(row.get<std::vector<int>>());
    } else {
      a.class_of.resize(model.num_states());
      for (int s = 0; s < model.num_states(); ++s)
        a.class_of[s].assign(model.emissions[s].num_components(), 0);
    }
    return a;
  }
  if (const auto* affine = spec_as<AffineModel>(ctx.obs_model)) {
    RegressionAssignment a;
    for (const auto& c : affine->classes)
      a.classes.push_back(RegressionClass{c.transform, c.bias_mean, c.bias_var});
    a.class_of.resize(model.num_states());
    for (int s = 0; s < model.num_states(); ++s) {
      const int K = model.emissions[s].num_components();
      a.class_of[s].resize(K);
      for (int k = 0; k < K; ++k) a.class_of[s][k] = affine->class_for(k);
    }
    return a;
  }
  fail(std::string(id) + ": no transform parameters");
}

CleanMarginals marginals_from(const nlohmann::json& params,
                              const TechniqueContext& ctx) {
  if (params.is_object() && params.contains("marginals"))
    return CleanMarginals{io::vector_from_json(params.at("marginals").at("mean")),
                          io::vector_from_json(params.at("marginals").at("var"))};
  return CleanMarginals{ctx.pooled_mean, ctx.pooled_var};
}

PmcApprox pmc_approx_from_id(const std::string& id) {
  if (id == "pmc.log_add" || id == "pmc.noise_hmm") return PmcApprox::kLogAdd;
  if (id == "pmc.log_normal") return PmcApprox::kLogNormal;
  return PmcApprox::kQuadrature;
}

ReverbMoment moment_from(const nlohmann::json& params) {
  const std::string m =
      params.is_object() ? params.value("moment", "log_add") : "log_add";
  if (m == "log_add") return ReverbMoment::kLogAdd;
  if (m == "log_normal") return ReverbMoment::kLogNormal;
  fail("unknown reverb moment: " + m);
}

}  // namespace

std::vector<std::string> registered_techniques() { return kTechniques; }

TechniqueKind technique_kind(const std::string& id) {
  if (std::find(kTechniques.begin(), kTechniques.end(), id) == kTechniques.end())
    fail("unknown technique id: " + id);
  if (id == "pmc.noise_hmm") return TechniqueKind::kJoint3d;
  if (id == "takiguchi") return TechniqueKind::kConditional;
  if (id == "reverb.partial_path") return TechniqueKind::kViterbiOnly;
  if (id == "pmc.log_add" || id == "pmc.log_normal" || id == "pmc.quadrature" ||
      id == "vts" || id == "cmllr" || id == "mllr" || id == "map" ||
      id == "rev_vts" || id == "reverb.static_prior")
    return TechniqueKind::kAdapter;
  return TechniqueKind::kScorer;
}

void pooled_clean_stats(const std::vector<Hmm>& classes, Eigen::VectorXd* mean,
                        Eigen::VectorXd* var) {
  if (classes.empty()) fail("no class models");
  const int d = classes.front().dim();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(d);
  for (const auto& hmm : classes) {
    Eigen::VectorXd cm, cv;
    averaged_clean_stats(hmm, &cm, &cv);
    m += cm;
    second += cv + cm.cwiseAbs2();
  }
  m /= static_cast<double>(classes.size());
  second /= static_cast<double>(classes.size());
  *mean = m;
  *var = (second - m.cwiseAbs2()).cwiseMax(0.0);
}

std::unique_ptr<EmissionScorer> build_scorer(const std::string& id,
                                             const nlohmann::json& params,
                                             const Hmm& model,
                                             const TechniqueContext& ctx) {
  if (id == "none") return std::make_unique<ConventionalScorer>(model);
  if (id == "arrowood") return make_arrowood_scorer(model);
  if (id == "dvc") return make_dvc_scorer(model);
  if (id == "modified_imputation") return make_modified_imputation_scorer(model);
  if (id == "significance") return make_significance_scorer(model);
  if (id == "splice.convolution" || id == "splice.prior_model") {
    const auto spec =
        technique_model<SpliceRegionsModel>(params, "splice", ctx, id.c_str());
    return make_splice_scorer(model, spec,
                              id == "splice.convolution"
                                  ? SpliceVariant::kConvolution
                                  : SpliceVariant::kPriorModel);
  }
  if (id == "jud")
    return make_jud_scorer(model, assignment_from(params, ctx, model, "jud"));
  if (id == "ion") {
    if (params.is_object() && params.contains("prior"))
      return make_ion_scorer(model,
                             Gaussian(io::vector_from_json(params.at("prior").at("mean")),
                                      io::vector_from_json(params.at("prior").at("var"))));
    return make_ion_scorer(model, Gaussian(ctx.pooled_mean, ctx.pooled_var));
  }
  if (id == "mf.imputation")
    return make_missing_feature_scorer(model, MissingFeatureMode::kImputation);
  if (id == "mf.marginalization") {
    const bool flat = params.is_object() && params.value("flat", false);
    if (flat)
      return make_missing_feature_scorer(model, MissingFeatureMode::kMarginalization,
                                         std::nullopt, true);
    return make_missing_feature_scorer(model, MissingFeatureMode::kMarginalization,
                                       marginals_from(params, ctx));
  }
  if (id == "bayesian_mllr") {
    if (!params.is_object() || !params.contains("a_mean"))
      fail("bayesian_mllr: params require a_mean/a_var/c_mean/c_var");
    return make_bayesian_mllr_scorer(
        model, MllrParamPrior{io::vector_from_json(params.at("a_mean")),
                              io::vector_from_json(params.at("a_var")),
                              io::vector_from_json(params.at("c_mean")),
                              io::vector_from_json(params.at("c_var"))});
  }
  if (id == "takiguchi")
    return make_takiguchi_scorer(
        model, technique_model<TakiguchiARModel>(params, "takiguchi", ctx, "takiguchi"));
  if (id == "reverb.partial_path")
    return make_partial_path_reverb_scorer(
        model, technique_model<ReverbLogSumModel>(params, "reverb", ctx, id.c_str()),
        moment_from(params));
  fail("technique '" + id + "' does not provide an emission scorer");
}

AdaptedHmm build_adapted(const std::string& id, const nlohmann::json& params,
                         const Hmm& model, const TechniqueContext& ctx) {
  if (id.rfind("pmc.", 0) == 0 && id != "pmc.noise_hmm")
    return pmc_adapt(model, technique_model<PmcLogSumModel>(params, "pmc", ctx, id.c_str()),
                     pmc_approx_from_id(id));
  if (id == "vts")
    return vts_adapt(model, technique_model<VtsLogSumModel>(params, "vts", ctx, "vts"));
  if (id == "cmllr")
    return cmllr_transform(model, assignment_from(params, ctx, model, "cmllr"));
  if (id == "mllr")
    return mllr_adapt_means(model, assignment_from(params, ctx, model, "mllr"));
  if (id == "rev_vts") {
    const auto spec =
        technique_model<ReverbLogSumModel>(params, "reverb", ctx, "rev_vts");
    if (spec.tail_length() == 0) {
      // Family coincidence: L = 0 reverberant log-sum is VTS with dirac h.
      VtsLogSumModel vts;
      vts.conv = DiagGaussianParam{spec.taps[0],
                                   Eigen::VectorXd::Zero(spec.taps[0].size())};
      vts.noise = spec.noise;
      AdaptedHmm out = vts_adapt(model, vts);
      out.technique = "rev_vts";
      return out;
    }
    return rev_vts_adapt(model, spec);
  }
  if (id == "reverb.static_prior")
    return reverb_static_adapt(
        model, technique_model<ReverbLogSumModel>(params, "reverb", ctx, id.c_str()),
        moment_from(params));
  if (id == "map")
    fail("map adaptation needs aligned data; use the adapt command with params.data");
  fail("technique '" + id + "' is not an adaptation");
}

std::unique_ptr<JointEmissionScorer> build_joint_scorer(
    const std::string& id, const nlohmann::json& params, const Hmm& model,
    const TechniqueContext& ctx) {
  if (id != "pmc.noise_hmm") fail("technique '" + id + "' is not a joint scorer");
  const auto spec = technique_model<PmcLogSumModel>(params, "pmc", ctx, id.c_str());
  if (!spec.noise_hmm) fail("pmc.noise_hmm: observation model lacks a noise HMM");
  const std::string approx =
      params.is_object() ? params.value("approx", "log_add") : "log_add";
  PmcApprox a = PmcApprox::kLogAdd;
  if (approx == "log_normal") a = PmcApprox::kLogNormal;
  else if (approx == "quadrature") a = PmcApprox::kQuadrature;
  else if (approx != "log_add") fail("pmc.noise_hmm: unknown approx " + approx);
  return make_pmc_noise_hmm_scorer(model, spec, a);
}

const Hmm& joint_noise_hmm(const TechniqueContext& ctx) {
  const auto* pmc = spec_as<PmcLogSumModel>(ctx.obs_model);
  if (!pmc || !pmc->noise_hmm) fail("observation model lacks a noise HMM");
  return *pmc->noise_hmm;
}

// --- config ------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (j.value("schema_version", -1) != io::kSchemaVersion)
    fail("config: unsupported or missing schema_version");
  ExperimentConfig c;
  if (!j.contains("seed")) fail("config: seed is mandatory");
  c.seed = j.at("seed").get<uint64_t>();
  c.trials = j.value("trials", 0);
  if (j.contains("length")) {
    c.length.min = j.at("length").value("min", 5);
    c.length.max = j.at("length").value("max", 20);
  }
  if (c.length.min < 1 || c.length.max < c.length.min)
    fail("config: invalid length range");
  if (j.contains("classes_file")) {
    c.classes = io::read_model_file(j.at("classes_file").get<std::string>()).models;
  } else if (j.contains("classes")) {
    for (const auto& m : j.at("classes")) c.classes.push_back(io::hmm_from_json(m));
  }
  if (j.contains("observation_model"))
    c.observation_model = io::obs_model_from_json(j.at("observation_model"));
  if (j.contains("technique")) {
    c.technique = j.at("technique").value("id", "none");
    if (j.at("technique").contains("params"))
      c.technique_params = j.at("technique").at("params");
  }
  technique_kind(c.technique);  // validates the id
  if (j.contains("evidence")) {
    const auto& e = j.at("evidence");
    c.evidence.bias_track = e.value("bias_track", false);
    c.evidence.posterior_track = e.value("posterior_track", false);
    if (e.contains("reliability"))
      c.evidence.reliability_threshold = e.at("reliability").value("threshold", 1.0);
    c.evidence.imputed = e.value("imputed", "marginal_mean");
  }
  c.score_mode = j.value("score_mode", "forward");
  if (c.score_mode != "forward" && c.score_mode != "viterbi")
    fail("config: score_mode must be forward or viterbi");
  c.dataset_dir = j.value("dataset_dir", "");
  const std::string fmt = j.value("format", "csv");
  if (fmt == "csv") c.format = io::FeatureFormat::kCsv;
  else if (fmt == "bin") c.format = io::FeatureFormat::kBin;
  else fail("config: format must be csv or bin");
  return c;
}

io::json ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = io::kSchemaVersion;
  j["seed"] = seed;
  j["trials"] = trials;
  j["length"] = json{{"min", length.min}, {"max", length.max}};
  json cls = json::array();
  for (const auto& m : classes) cls.push_back(io::hmm_to_json(m));
  j["classes"] = std::move(cls);
  j["observation_model"] = io::obs_model_to_json(observation_model);
  j["technique"] = json{{"id", technique}};
  if (!technique_params.is_null()) j["technique"]["params"] = technique_params;
  json ev;
  ev["bias_track"] = evidence.bias_track;
  ev["posterior_track"] = evidence.posterior_track;
  if (evidence.reliability_threshold)
    ev["reliability"] = json{{"threshold", *evidence.reliability_threshold}};
  ev["imputed"] = evidence.imputed;
  j["evidence"] = std::move(ev);
  j["score_mode"] = score_mode;
  j["dataset_dir"] = dataset_dir;
  j["format"] = format == io::FeatureFormat::kCsv ? "csv" : "bin";
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return ExperimentConfig::from_json(io::read_json_file(path));
}

// --- generate ------------------------------------------------------------------

namespace {

json build_evidence_json(const ExperimentConfig& config,
                         const SampledUtterance& utt,
                         const std::vector<Eigen::VectorXd>& observed_q,
                         const Eigen::VectorXd& pooled_mean,
                         const Eigen::VectorXd& pooled_var) {
  const auto* additive = std::get_if<AdditiveGaussianModel>(&config.observation_model);
  const auto& ec = config.evidence;
  if ((ec.bias_track || ec.posterior_track || ec.reliability_threshold) && !additive)
    fail("evidence tracks require the additive_gaussian observation model");

  json frames = json::array();
  const int dim = static_cast<int>(observed_q.front().size());
  for (size_t n = 0; n < observed_q.size(); ++n) {
    FrameEvidence ev = FrameEvidence::plain(observed_q[n]);
    if (ec.bias_track) {
      ev.bias = BiasTrack{additive->mean_at(static_cast<int>(n)),
                          additive->var_at(static_cast<int>(n))};
    }
    if (ec.posterior_track) {
      const Eigen::VectorXd& mb = additive->mean_at(static_cast<int>(n));
      const Eigen::VectorXd& vb = additive->var_at(static_cast<int>(n));
      Eigen::VectorXd pm(dim), pv(dim);
      for (int d = 0; d < dim; ++d) {
        const double like_mean = observed_q[n][d] - mb[d];
        if (vb[d] == 0.0) {
          pm[d] = like_mean;
          pv[d] = 0.0;
        } else {
          const double prec = 1.0 / pooled_var[d] + 1.0 / vb[d];
          pv[d] = 1.0 / prec;
          pm[d] = pv[d] * (pooled_mean[d] / pooled_var[d] + like_mean / vb[d]);
        }
      }
      ev.posterior = PosteriorTrack{std::move(pm), std::move(pv)};
    }
    if (ec.reliability_threshold) {
      const Eigen::VectorXd& mb = additive->mean_at(static_cast<int>(n));
      const Eigen::VectorXd& vb = additive->var_at(static_cast<int>(n));
      Reliability rel;
      rel.reliable.resize(dim);
      const Eigen::VectorXd& b = *utt.latents[n].bias;
      for (int d = 0; d < dim; ++d) {
        const double dev = std::abs(b[d] - mb[d]);
        rel.reliable[d] =
            vb[d] == 0.0 || dev <= *ec.reliability_threshold * std::sqrt(vb[d]);
      }
      Eigen::VectorXd imputed(dim);
      for (int d = 0; d < dim; ++d) {
        imputed[d] = (ec.imputed == "true_clean")
                         ? static_cast<double>(static_cast<float>(utt.clean[n][d]))
                         : pooled_mean[d];
      }
      rel.imputed = std::move(imputed);
      ev.reliability = std::move(rel);
    }
    frames.push_back(io::evidence_to_json(ev));
  }
  return frames;
}

}  // namespace

void run_generate(const ExperimentConfig& config, const fs::path& output_dir) {
  if (config.trials < 1) fail("generate: trials must be >= 1");
  if (config.classes.empty()) fail("generate: no class models");
  for (const auto& m : config.classes) m.validate();
  validate_spec(config.observation_model, config.classes.front().dim());
  fs::create_directories(output_dir);

  Eigen::VectorXd pooled_mean, pooled_var;
  pooled_clean_stats(config.classes, &pooled_mean, &pooled_var);

  const SeedStream root(config.seed);
  json manifest;
  manifest["schema_version"] = io::kSchemaVersion;
  manifest["seed"] = config.seed;
  manifest["config"] = config.to_json();
  json trials = json::array();

  const Eigen::VectorXd class_probs = Eigen::VectorXd::Constant(
      config.classes.size(), 1.0 / static_cast<double>(config.classes.size()));

  for (int i = 0; i < config.trials; ++i) {
    const int true_class =
        root.at("class").at(static_cast<uint64_t>(i)).categorical(class_probs);
    const int span = config.length.max - config.length.min + 1;
    const int length =
        config.length.min +
        static_cast<int>(root.at("length").at(static_cast<uint64_t>(i)).bits(0) %
                         static_cast<uint64_t>(span));
    const uint64_t utt_seed = root.at("utt").at(static_cast<uint64_t>(i)).state();
    const SampledUtterance utt = sample_utterance(
        config.observation_model, config.classes[true_class], length, utt_seed);

    const auto clean_q = io::quantize_to_float32(utt.clean);
    const auto observed_q = io::quantize_to_float32(utt.observed);
    const std::string stem = trial_stem(i);
    const std::string ext = io::feature_extension(config.format);
    io::write_features(output_dir / (stem + ".clean" + ext), clean_q, config.format);
    io::write_features(output_dir / (stem + ".observed" + ext), observed_q,
                       config.format);

    json sidecar;
    sidecar["schema_version"] = io::kSchemaVersion;
    sidecar["trial"] = i;
    sidecar["true_class"] = true_class;
    sidecar["seed"] = utt_seed;
    sidecar["states"] = utt.states;
    json lats = json::array();
    for (const auto& lat : utt.latents) lats.push_back(io::latents_to_json(lat));
    sidecar["latents"] = std::move(lats);
    sidecar["evidence"] =
        build_evidence_json(config, utt, observed_q, pooled_mean, pooled_var);
    io::write_json_file(output_dir / (stem + ".sidecar.json"), sidecar);

    json t;
    t["id"] = i;
    t["true_class"] = true_class;
    t["length"] = length;
    t["clean"] = stem + ".clean" + ext;
    t["observed"] = stem + ".observed" + ext;
    t["sidecar"] = stem + ".sidecar.json";
    trials.push_back(std::move(t));
  }
  manifest["trials"] = std::move(trials);
  io::write_json_file(output_dir / "manifest.json", manifest);
}

// --- decode --------------------------------------------------------------------

namespace {

struct PreparedTechnique {
  TechniqueKind kind;
  std::vector<std::unique_ptr<EmissionScorer>> scorers;       // per class
  std::vector<Hmm> scorer_models;                             // per class
  std::vector<std::unique_ptr<JointEmissionScorer>> joints;   // per class
  const Hmm* noise_hmm = nullptr;
};

PreparedTechnique prepare_technique(const ExperimentConfig& config,
                                    const TechniqueContext& ctx) {
  PreparedTechnique prep;
  prep.kind = technique_kind(config.technique);
  for (const auto& model : config.classes) {
    switch (prep.kind) {
      case TechniqueKind::kAdapter: {
        AdaptedHmm adapted =
            build_adapted(config.technique, config.technique_params, model, ctx);
        prep.scorer_models.push_back(adapted.hmm);
        break;
      }
      case TechniqueKind::kJoint3d:
        prep.joints.push_back(build_joint_scorer(config.technique,
                                                 config.technique_params, model, ctx));
        break;
      default:
        prep.scorer_models.push_back(model);
        break;
    }
  }
  // Scorers are built against the (possibly adapted) models.
  for (const auto& model : prep.scorer_models) {
    if (prep.kind == TechniqueKind::kAdapter)
      prep.scorers.push_back(std::make_unique<ConventionalScorer>(model));
    else if (prep.kind != TechniqueKind::kJoint3d)
      prep.scorers.push_back(
          build_scorer(config.technique, config.technique_params, model, ctx));
  }
  if (prep.kind == TechniqueKind::kJoint3d) prep.noise_hmm = &joint_noise_hmm(ctx);
  return prep;
}

double class_score(const ExperimentConfig& config, const PreparedTechnique& prep,
                   int cls, std::span<const FrameEvidence> evidence,
                   DecodeResult* decode_out) {
  const Hmm& model =
      prep.kind == TechniqueKind::kJoint3d ? config.classes[cls] : prep.scorer_models[cls];
  switch (prep.kind) {
    case TechniqueKind::kJoint3d: {
      const auto res = viterbi_3d(model, *prep.noise_hmm, *prep.joints[cls], evidence);
      if (decode_out) {
        decode_out->path = res.speech_path;
        decode_out->frame_scores = res.frame_scores;
        decode_out->total_log_score = res.total_log_score;
        decode_out->decoder_kind = "viterbi_3d";
      }
      return res.total_log_score;
    }
    case TechniqueKind::kConditional: {
      if (config.score_mode == "forward")
        return forward_log_score(model, *prep.scorers[cls], evidence);
      auto res = decode_conditional(model, *prep.scorers[cls], evidence);
      const double total = res.total_log_score;
      if (decode_out) *decode_out = std::move(res);
      return total;
    }
    case TechniqueKind::kViterbiOnly: {
      if (config.score_mode == "forward")
        fail("reverb.partial_path requires score_mode viterbi "
             "(the forward recursion publishes no partial path)");
      auto res = viterbi(model, *prep.scorers[cls], evidence);
      const double total = res.total_log_score;
      if (decode_out) *decode_out = std::move(res);
      return total;
    }
    default: {
      if (config.score_mode == "forward")
        return forward_log_score(model, *prep.scorers[cls], evidence);
      auto res = viterbi(model, *prep.scorers[cls], evidence);
      const double total = res.total_log_score;
      if (decode_out) *decode_out = std::move(res);
      return total;
    }
  }
}

// Which evidence track the technique consumes; the sidecar may carry several,
// but a FrameEvidence holds at most one uncertainty form.
enum class TrackNeed { kNone, kBias, kPosterior, kReliability };

TrackNeed technique_track(const std::string& id) {
  if (id == "arrowood") return TrackNeed::kBias;
  if (id == "dvc" || id == "ion" || id == "modified_imputation" ||
      id == "significance")
    return TrackNeed::kPosterior;
  if (id.rfind("mf.", 0) == 0) return TrackNeed::kReliability;
  return TrackNeed::kNone;
}

FrameEvidence evidence_for_technique(const nlohmann::json& frame_json,
                                     Eigen::VectorXd observed,
                                     const std::string& technique) {
  FrameEvidence ev = FrameEvidence::plain(std::move(observed));
  const TrackNeed need = technique_track(technique);
  if (need == TrackNeed::kBias && frame_json.contains("bias"))
    ev.bias = BiasTrack{io::vector_from_json(frame_json.at("bias").at("mean")),
                        io::vector_from_json(frame_json.at("bias").at("var"))};
  if (need == TrackNeed::kPosterior && frame_json.contains("posterior"))
    ev.posterior =
        PosteriorTrack{io::vector_from_json(frame_json.at("posterior").at("mean")),
                       io::vector_from_json(frame_json.at("posterior").at("var"))};
  if (need == TrackNeed::kReliability && frame_json.contains("reliability")) {
    Reliability rel;
    for (const auto& b : frame_json.at("reliability").at("mask"))
      rel.reliable.push_back(b.get<int>() != 0);
    if (frame_json.at("reliability").contains("imputed"))
      rel.imputed = io::vector_from_json(frame_json.at("reliability").at("imputed"));
    ev.reliability = std::move(rel);
  }
  if (frame_json.contains("region_posterior"))
    ev.region_posterior = io::vector_from_json(frame_json.at("region_posterior"));
  ev.validate();
  return ev;
}

// Per-frame contributions along a decoded path (init/transition + emission);
// they sum to the total score exactly.
std::vector<double> path_contributions(const Hmm& model, const DecodeResult& res) {
  std::vector<double> out(res.path.size());
  for (size_t n = 0; n < res.path.size(); ++n) {
    const double trans = (n == 0)
                             ? std::log(model.initial[res.path[0]])
                             : std::log(model.transitions(res.path[n - 1], res.path[n]));
    out[n] = trans + res.frame_scores[n];
  }
  return out;
}

}  // namespace

io::json MetricsReport::to_json(const ExperimentConfig& config) const {
  json j;
  j["schema_version"] = io::kSchemaVersion;
  j["seed"] = config.seed;
  j["technique"] = config.technique;
  j["score_mode"] = config.score_mode;
  json ts = json::array();
  for (const auto& t : trials) {
    json e;
    e["id"] = t.id;
    e["true_class"] = t.true_class;
    e["decision"] = t.decision;
    json scores = json::array();
    for (double s : t.scores) scores.push_back(s);
    e["scores"] = std::move(scores);
    e["margin"] = t.margin;
    ts.push_back(std::move(e));
  }
  j["trials"] = std::move(ts);
  j["accuracy"] = accuracy;
  j["mean_margin"] = mean_margin;
  return j;
}

MetricsReport run_decode(const ExperimentConfig& config, const fs::path& dataset_dir,
                         const fs::path& output_dir, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  if (config.classes.empty()) fail("decode: no class models");
  const json manifest = io::read_json_file(dataset_dir / "manifest.json");
  if (manifest.value("schema_version", -1) != io::kSchemaVersion)
    fail("manifest: unsupported schema_version");
  fs::create_directories(output_dir);

  TechniqueContext ctx;
  ctx.obs_model = &config.observation_model;
  pooled_clean_stats(config.classes, &ctx.pooled_mean, &ctx.pooled_var);
  const PreparedTechnique prep = prepare_technique(config, ctx);
  const bool keep_paths =
      config.score_mode == "viterbi" || prep.kind == TechniqueKind::kJoint3d;

  const auto& trials_json = manifest.at("trials");
  const int n_trials = static_cast<int>(trials_json.size());
  std::vector<TrialResult> results(n_trials);
  std::vector<json> decode_files(n_trials);

  const auto run_trial = [&](int i) {
    const auto& t = trials_json[i];
    TrialResult& r = results[i];
    r.id = t.at("id").get<int>();
    r.true_class = t.at("true_class").get<int>();
    const auto observed =
        io::read_features(dataset_dir / t.at("observed").get<std::string>());
    const json sidecar =
        io::read_json_file(dataset_dir / t.at("sidecar").get<std::string>());
    std::vector<FrameEvidence> evidence;
    for (size_t n = 0; n < sidecar.at("evidence").size(); ++n) {
      // The feature file is authoritative for y; the sidecar supplies the
      // track the technique consumes.
      evidence.push_back(evidence_for_technique(sidecar.at("evidence")[n],
                                                observed.at(n), config.technique));
    }

    DecodeResult best_decode;
    r.scores.resize(config.classes.size());
    int best = 0;
    for (size_t c = 0; c < config.classes.size(); ++c) {
      DecodeResult dec;
      r.scores[c] = class_score(config, prep, static_cast<int>(c), evidence,
                                keep_paths ? &dec : nullptr);
      if (std::isnan(r.scores[c])) throw NumericError("decode: NaN class score");
      if (r.scores[c] > r.scores[best]) best = static_cast<int>(c);
      if (keep_paths && static_cast<int>(c) == best) best_decode = std::move(dec);
    }
    r.decision = best;
    double other = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < r.scores.size(); ++c)
      if (static_cast<int>(c) != best) other = std::max(other, r.scores[c]);
    r.margin = r.scores[best] - other;

    json d;
    d["schema_version"] = io::kSchemaVersion;
    d["trial"] = r.id;
    d["true_class"] = r.true_class;
    json scores = json::array();
    for (double s : r.scores) scores.push_back(s);
    d["scores"] = std::move(scores);
    d["decision"] = r.decision;
    if (keep_paths) {
      r.path = best_decode.path;
      r.frame_scores = best_decode.frame_scores;
      d["decoder"] = best_decode.decoder_kind;
      d["path"] = best_decode.path;
      json fs_json = json::array();
      for (double s : best_decode.frame_scores) fs_json.push_back(s);
      d["frame_scores"] = std::move(fs_json);
      const Hmm& model = prep.kind == TechniqueKind::kJoint3d
                             ? config.classes[r.decision]
                             : prep.scorer_models[r.decision];
      if (prep.kind != TechniqueKind::kJoint3d) {
        json contrib = json::array();
        for (double s : path_contributions(model, best_decode)) contrib.push_back(s);
        d["frame_contributions"] = std::move(contrib);
        d["total"] = best_decode.total_log_score;
      }
      if (!best_decode.invalid_frames.empty())
        d["invalid_frames"] = best_decode.invalid_frames;
    }
    decode_files[i] = std::move(d);
  };

  if (jobs <= 1) {
    for (int i = 0; i < n_trials; ++i) run_trial(i);
  } else {
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= n_trials) return;
          try {
            run_trial(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
  }

  MetricsReport report;
  report.trials = std::move(results);
  int correct = 0;
  double margin_sum = 0.0;
  for (const auto& r : report.trials) {
    correct += (r.decision == r.true_class) ? 1 : 0;
    margin_sum += r.margin;
  }
  report.accuracy = n_trials ? static_cast<double>(correct) / n_trials : 0.0;
  report.mean_margin = n_trials ? margin_sum / n_trials : 0.0;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (int i = 0; i < n_trials; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "decode_%04d.json", i);
    io::write_json_file(output_dir / buf, decode_files[i]);
  }
  io::write_json_file(output_dir / "report.json", report.to_json(config));
  return report;
}

MetricsReport run_evaluate(const fs::path& dataset_dir, const fs::path& decode_dir,
                           const fs::path& output_dir) {
  const json manifest = io::read_json_file(dataset_dir / "manifest.json");
  const auto& trials_json = manifest.at("trials");
  fs::create_directories(output_dir);

  MetricsReport report;
  int correct = 0;
  double margin_sum = 0.0;
  for (size_t i = 0; i < trials_json.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "decode_%04zu.json", i);
    const json d = io::read_json_file(decode_dir / buf);
    TrialResult r;
    r.id = d.at("trial").get<int>();
    r.true_class = trials_json[i].at("true_class").get<int>();
    if (d.at("true_class").get<int>() != r.true_class)
      fail("evaluate: decode output disagrees with the manifest truth");
    for (const auto& s : d.at("scores")) r.scores.push_back(s.get<double>());
    // Recompute the decision from the stored scores.
    int best = 0;
    for (size_t c = 1; c < r.scores.size(); ++c)
      if (r.scores[c] > r.scores[best]) best = static_cast<int>(c);
    r.decision = best;
    if (d.at("decision").get<int>() != best)
      fail("evaluate: stored decision does not maximize the stored scores");
    double other = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < r.scores.size(); ++c)
      if (static_cast<int>(c) != best) other = std::max(other, r.scores[c]);
    r.margin = r.scores[best] - other;
    // Where a path trace is present its contributions must sum to the total.
    if (d.contains("frame_contributions")) {
      double sum = 0.0;
      for (const auto& s : d.at("frame_contributions")) sum += s.get<double>();
      const double total = d.at("total").get<double>();
      if (std::abs(sum - total) > 1e-6 * std::max(1.0, std::abs(total)))
        fail("evaluate: frame contributions do not sum to the total score");
    }
    correct += (r.decision == r.true_class) ? 1 : 0;
    margin_sum += r.margin;
    report.trials.push_back(std::move(r));
  }
  const int n = static_cast<int>(report.trials.size());
  report.accuracy = n ? static_cast<double>(correct) / n : 0.0;
  report.mean_margin = n ? margin_sum / n : 0.0;

  json out;
  out["schema_version"] = io::kSchemaVersion;
  out["trials"] = n;
  out["accuracy"] = report.accuracy;
  out["mean_margin"] = report.mean_margin;
  out["checks"] = "decisions and score decompositions verified";
  io::write_json_file(output_dir / "evaluation.json", out);
  return report;
}

void run_adapt(const fs::path& model_path, const std::string& technique,
               const nlohmann::json& params,
               const std::optional<ObservationModelSpec>& obs_model,
               const fs::path& output_path) {
  const io::ModelFile in = io::read_model_file(model_path);
  if (in.models.empty()) fail("adapt: model file has no models");

  TechniqueContext ctx;
  if (obs_model) ctx.obs_model = &*obs_model;
  pooled_clean_stats(in.models, &ctx.pooled_mean, &ctx.pooled_var);

  io::ModelFile out;
  std::string parameters;
  for (const auto& model : in.models) {
    if (technique == "map") {
      if (!params.is_object() || !params.contains("data"))
        fail("map: params.data must point to a generated dataset directory");
      const fs::path data_dir = params.at("data").get<std::string>();
      const json manifest = io::read_json_file(data_dir / "manifest.json");
      std::vector<LabeledSequence> data;
      for (const auto& t : manifest.at("trials")) {
        const json sidecar =
            io::read_json_file(data_dir / t.at("sidecar").get<std::string>());
        LabeledSequence seq;
        seq.frames = io::read_features(data_dir / t.at("clean").get<std::string>());
        seq.states = sidecar.at("states").get<std::vector<int>>();
        data.push_back(std::move(seq));
      }
      MapPrior prior;
      prior.tau = params.value("tau", 0.0);
      AdaptedHmm adapted = map_adapt_means(model, prior, data);
      parameters = adapted.parameters;
      out.models.push_back(std::move(adapted.hmm));
    } else {
      AdaptedHmm adapted = build_adapted(technique, params, model, ctx);
      parameters = adapted.parameters;
      out.models.push_back(std::move(adapted.hmm));
    }
  }
  out.provenance = json{{"technique", technique},
                        {"params", params.is_null() ? json::object() : json(params)},
                        {"source", model_path.filename().string()}};
  io::write_model_file(output_path, out);
}

}  // namespace bnc::harness
