#ifndef BNC_HARNESS_HPP
#define BNC_HARNESS_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bnc/compensation.hpp"
#include "bnc/io.hpp"

namespace bnc::harness {

// ---------------------------------------------------------------------------
// Reproducible desk-scale experiments: synthetic task generation, technique
// application, decoding, metric reporting. All randomness flows from the
// single config seed through named counter streams, so identical config+seed
// runs produce byte-identical outputs.
// ---------------------------------------------------------------------------

struct LengthRange {
  int min = 5;
  int max = 20;
};

/// Which uncertainty sidecar tracks `generate` derives from the true latents.
struct EvidenceConfig {
  bool bias_track = false;       // p(b_n) stats from the observation model
  bool posterior_track = false;  // p(x|y) against the pooled clean prior
  std::optional<double> reliability_threshold;  // |b_d| > thr * sigma_d
  std::string imputed = "marginal_mean";        // or "true_clean"
};

struct ExperimentConfig {
  uint64_t seed = 0;
  int trials = 0;
  LengthRange length;
  std::vector<Hmm> classes;
  ObservationModelSpec observation_model;
  std::string technique = "none";
  nlohmann::json technique_params;
  EvidenceConfig evidence;
  std::string score_mode = "forward";  // or "viterbi"
  std::string dataset_dir;
  io::FeatureFormat format = io::FeatureFormat::kCsv;

  static ExperimentConfig from_json(const nlohmann::json& j);
  io::json to_json() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

// --- technique registry -------------------------------------------------------

std::vector<std::string> registered_techniques();

/// Pooled clean statistics and the observation model, available to technique
/// builders that need a prior or marginal.
struct TechniqueContext {
  const ObservationModelSpec* obs_model = nullptr;
  Eigen::VectorXd pooled_mean;
  Eigen::VectorXd pooled_var;
};

/// How a technique plugs into decoding.
enum class TechniqueKind {
  kScorer,        // EmissionScorer on the clean model
  kAdapter,       // transforms the model, then conventional scoring
  kJoint3d,       // joint scorer for viterbi_3d
  kConditional,   // EmissionScorer for decode_conditional
  kViterbiOnly,   // scorer that requires the partial-path publishing decoder
};

TechniqueKind technique_kind(const std::string& id);

std::unique_ptr<EmissionScorer> build_scorer(const std::string& id,
                                             const nlohmann::json& params,
                                             const Hmm& model,
                                             const TechniqueContext& ctx);

AdaptedHmm build_adapted(const std::string& id, const nlohmann::json& params,
                         const Hmm& model, const TechniqueContext& ctx);

std::unique_ptr<JointEmissionScorer> build_joint_scorer(
    const std::string& id, const nlohmann::json& params, const Hmm& model,
    const TechniqueContext& ctx);

/// The noise HMM used by joint techniques (from the observation model).
const Hmm& joint_noise_hmm(const TechniqueContext& ctx);

/// Occupancy-pooled single-Gaussian clean statistics over all class models.
void pooled_clean_stats(const std::vector<Hmm>& classes, Eigen::VectorXd* mean,
                        Eigen::VectorXd* var);

// --- commands ------------------------------------------------------------------

/// Samples the synthetic task and writes feature files, latent/evidence
/// sidecars, and manifest.json under output_dir.
void run_generate(const ExperimentConfig& config,
                  const std::filesystem::path& output_dir);

struct TrialResult {
  int id = 0;
  int true_class = 0;
  int decision = 0;
  std::vector<double> scores;  // per class
  double margin = 0.0;         // decided minus best other
  std::vector<double> frame_scores;  // viterbi-family modes only
  std::vector<int> path;             // viterbi-family modes only
};

struct MetricsReport {
  std::vector<TrialResult> trials;
  double accuracy = 0.0;
  double mean_margin = 0.0;
  double wall_clock_seconds = 0.0;  // reported on stdout, never in the file

  io::json to_json(const ExperimentConfig& config) const;
};

/// Scores every trial in the dataset against every class model with the
/// configured technique; writes report.json and per-trial decode files under
/// output_dir.
MetricsReport run_decode(const ExperimentConfig& config,
                         const std::filesystem::path& dataset_dir,
                         const std::filesystem::path& output_dir, int jobs = 1);

/// Recomputes the metrics from decode outputs + the dataset manifest and
/// verifies the stored decisions and score decompositions.
MetricsReport run_evaluate(const std::filesystem::path& dataset_dir,
                           const std::filesystem::path& decode_dir,
                           const std::filesystem::path& output_dir);

/// Applies an adaptation technique to a model file.
void run_adapt(const std::filesystem::path& model_path, const std::string& technique,
               const nlohmann::json& params,
               const std::optional<ObservationModelSpec>& obs_model,
               const std::filesystem::path& output_path);

}  // namespace bnc::harness

#endif  // BNC_HARNESS_HPP
