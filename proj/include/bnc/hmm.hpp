#ifndef BNC_HMM_HPP
#define BNC_HMM_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bnc/gaussian.hpp"

namespace bnc {

/// Hidden Markov model with per-state GMM emissions over clean features.
struct Hmm {
  Eigen::VectorXd initial;      // p(q_1)
  Eigen::MatrixXd transitions;  // row-stochastic, p(q_n | q_{n-1})
  std::vector<Gmm> emissions;   // p(x_n | q_n) per state
  std::string model_id;

  int num_states() const { return static_cast<int>(initial.size()); }
  int dim() const { return emissions.empty() ? 0 : emissions.front().dim(); }
  /// Checks stochasticity (1e-12), shapes, and emission consistency.
  void validate() const;
};

/// Posterior moments p(x_n | y_n) = N(mean, diag(var)) supplied by an
/// upstream enhancement stage.
struct PosteriorTrack {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

/// Additive-bias statistics p(b_n) = N(mean, diag(var)).
struct BiasTrack {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

/// Per-dimension reliability classification plus optional imputed
/// substitutes for the unreliable dimensions.
struct Reliability {
  std::vector<bool> reliable;               // true: d in R_n, false: d in U_n
  std::optional<Eigen::VectorXd> imputed;   // x-hat, required for imputation
};

/// One observed frame with its optional uncertainty sidecar. Decoders never
/// interpret the optional fields; scorers do.
struct FrameEvidence {
  Eigen::VectorXd observed;  // y_n
  std::optional<PosteriorTrack> posterior;
  std::optional<BiasTrack> bias;
  std::optional<Reliability> reliability;
  std::optional<Eigen::VectorXd> region_posterior;  // p(s_n | .) override

  int dim() const { return static_cast<int>(observed.size()); }
  /// At most one uncertainty form; reliability mask partitions {1..D}.
  void validate() const;

  static FrameEvidence plain(Eigen::VectorXd y);
};

std::vector<FrameEvidence> to_evidence(const std::vector<Eigen::VectorXd>& frames);

/// What a scorer consumes beyond (frame, state, evidence). Decoders validate
/// compatibility against this declaration before running.
struct ScorerNeeds {
  bool prev_state = false;        // emission conditioned on q_{n-1}
  std::vector<int> past_shifts;   // emission conditioned on y_{n-psi_i}
  bool partial_path = false;      // reads the decoder's best partial path
};

struct ScoreRequest {
  int frame = 0;                      // n, 0-based
  int state = 0;                      // q_n
  std::optional<int> component;       // k_n, when scoring one component
  std::optional<int> prev_state;      // q_{n-1}, absent at n = 0
};

/// Decoder-published context, read-only for scorers within a decode.
struct DecodeContext {
  /// Past observations aligned with the scorer's declared past_shifts;
  /// nullptr marks a shift that reaches before the first frame.
  std::vector<const Eigen::VectorXd*> past;
  /// Best partial path over frames [0, n), present only when the scorer
  /// declares partial_path.
  std::span<const int> partial_path;
};

/// Stateless emission scorer: identical arguments yield identical results.
/// Implementations mix over GMM components internally unless a specific
/// component is requested.
class EmissionScorer {
 public:
  virtual ~EmissionScorer() = default;
  virtual ScorerNeeds needs() const { return {}; }
  virtual LogProb score(const ScoreRequest& req, const FrameEvidence& evidence,
                        const DecodeContext& ctx) const = 0;

  /// Convenience for the common (frame, state, evidence) call.
  LogProb score_plain(int frame, int state, const FrameEvidence& ev) const {
    ScoreRequest req;
    req.frame = frame;
    req.state = state;
    return score(req, ev, DecodeContext{});
  }
};

/// Emission scorer over a speech/noise state pair, for the 3D decoder.
class JointEmissionScorer {
 public:
  virtual ~JointEmissionScorer() = default;
  virtual LogProb score(int frame, int speech_state, int noise_state,
                        const FrameEvidence& evidence) const = 0;
};

/// Scores the observed vector directly against the clean emission GMMs.
class ConventionalScorer : public EmissionScorer {
 public:
  explicit ConventionalScorer(const Hmm& hmm);
  LogProb score(const ScoreRequest& req, const FrameEvidence& evidence,
                const DecodeContext& ctx) const override;

 private:
  std::vector<Gmm> emissions_;
};

struct DecodeResult {
  std::vector<int> path;            // q_{1:N} as 0-based indices
  LogProb total_log_score = 0.0;
  std::vector<LogProb> frame_scores;  // emission scores along path
  std::string decoder_kind;
  /// Frames on which every state scored -inf (e.g. observations outside an
  /// invertibility region).
  std::vector<int> invalid_frames;
};

/// Helper shared by scorers: mix per-component log scores with the GMM
/// weights, or return the single requested component's score.
LogProb mix_components(const Gmm& gmm, const std::optional<int>& component,
                       const std::function<LogProb(int)>& component_score);

}  // namespace bnc

#endif  // BNC_HMM_HPP
