#ifndef BNC_OBS_MODEL_HPP
#define BNC_OBS_MODEL_HPP

#include <optional>
#include <span>
#include <variant>

#include "bnc/hmm.hpp"
#include "bnc/rng.hpp"

namespace bnc {

// ---------------------------------------------------------------------------
// Observation model families y = f(x, b). Dimensions equal the feature
// dimension D; log-sum families evaluate per dimension via log_sum_exp in the
// listed term order.
// ---------------------------------------------------------------------------

/// y = x + b, b ~ N(mean, diag(var)); optionally a per-frame track.
struct AdditiveGaussianModel {
  Eigen::VectorXd bias_mean;
  Eigen::VectorXd bias_var;
  std::vector<BiasTrack> track;  // when non-empty, overrides per frame

  const Eigen::VectorXd& mean_at(int frame) const;
  const Eigen::VectorXd& var_at(int frame) const;
};

/// y = A_k x + b with p(b|k) Gaussian (dirac when var is zero); class k
/// selected by the clean GMM component through class_of_component.
struct AffineClass {
  Eigen::MatrixXd transform;
  Eigen::VectorXd bias_mean;
  Eigen::VectorXd bias_var;  // exact zeros mean a deterministic bias
};

struct AffineModel {
  std::vector<AffineClass> classes;
  std::vector<int> class_of_component;  // empty: all components use class 0

  int class_for(int component) const;
};

/// Algonquin distortion y = x + log(1 + exp(r - x)) + b with a per-frame
/// noise estimate r and residual b ~ N(0, diag(residual_var)).
struct AlgonquinModel {
  std::vector<Eigen::VectorXd> noise_estimate;  // size 1: constant
  Eigen::VectorXd residual_var;

  const Eigen::VectorXd& estimate_at(int frame) const;
};

/// Diagonal Gaussian parameter pdf for observation models. Unlike bnc::Gaussian
/// no variance floor is applied: an exact zero variance is a dirac parameter.
struct DiagGaussianParam {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// y = x + b with p(b) = sum_s p(s) N(b; -r_s, G_s).
struct SpliceRegionsModel {
  Eigen::VectorXd priors;                   // p(s)
  std::vector<Eigen::VectorXd> offsets;     // r_s
  std::vector<Eigen::VectorXd> region_var;  // G_s diagonals
  /// Optional separate prior model p(y|s) = N(mean, var), aligned with the
  /// regions and sharing p(s).
  std::optional<std::vector<Gaussian>> y_prior;

  int num_regions() const { return static_cast<int>(priors.size()); }
};

/// y = log(alpha exp(x) + exp(b)); stationary noise, or a noise HMM whose
/// per-state single Gaussians replace p(b).
struct PmcLogSumModel {
  double level_alpha = 1.0;
  std::optional<DiagGaussianParam> noise;  // absent: the exp(b) term is skipped
  std::optional<Hmm> noise_hmm;
};

/// y = log(exp(h + x) + exp(c)) with time-constant h, c statistics.
struct VtsLogSumModel {
  DiagGaussianParam conv;                  // p(h)
  std::optional<DiagGaussianParam> noise;  // p(c); absent skips the term
};

/// y = log(exp(c) + exp(h + x) + exp(a) sum_l exp(mu_l + x_{n-l})).
struct RemosLogSumModel {
  DiagGaussianParam noise;      // c_n
  DiagGaussianParam conv;       // h_n
  DiagGaussianParam tail_gain;  // a_n
  std::vector<Eigen::VectorXd> tail;  // mu_{1:L}
};

/// y = log(sum_{l=0}^L exp(x_{n-l} + mu_l) [+ exp(b)]).
struct ReverbLogSumModel {
  std::vector<Eigen::VectorXd> taps;  // mu_0 .. mu_L
  std::optional<DiagGaussianParam> noise;

  int tail_length() const { return static_cast<int>(taps.size()) - 1; }
};

/// y_n = log(exp(h + x_n) + exp(alpha + y_{n-1})); deterministic h, alpha.
/// The first frame has no tail: y_1 = h + x_1.
struct TakiguchiARModel {
  Eigen::VectorXd conv;                        // h
  std::optional<Eigen::VectorXd> tail_weight;  // alpha; absent: pure shift
};

using ObservationModelSpec =
    std::variant<AdditiveGaussianModel, AffineModel, AlgonquinModel,
                 SpliceRegionsModel, PmcLogSumModel, VtsLogSumModel,
                 RemosLogSumModel, ReverbLogSumModel, TakiguchiARModel>;

/// Frames of clean context the family consumes in addition to x_n.
int model_tail_length(const ObservationModelSpec& spec);
/// Validates all parameter dimensions against the feature dimension.
void validate_spec(const ObservationModelSpec& spec, int dim);

/// Per-frame latent draws recorded during sampling; replaying them through
/// apply_model reproduces y bit-for-bit.
struct FrameLatents {
  int frame = 0;  // n, for families with per-frame deterministic parameters
  std::optional<Eigen::VectorXd> bias;       // b_n
  std::optional<Eigen::VectorXd> conv;       // h_n
  std::optional<Eigen::VectorXd> noise;      // c_n
  std::optional<Eigen::VectorXd> tail_gain;  // a_n
  int region = -1;       // s_n
  int component = -1;    // k_n of the clean emission
  int noise_state = -1;  // q-bar_n
};

struct SampledUtterance {
  std::vector<Eigen::VectorXd> clean;
  std::vector<Eigen::VectorXd> observed;
  std::vector<int> states;
  std::vector<FrameLatents> latents;
  uint64_t seed = 0;
};

/// Deterministic evaluation of the family's formula.
/// x_window holds [x_{n-L}, ..., x_n] oldest-first with x_window.back() = x_n;
/// near the start of an utterance it may be shorter and missing taps are
/// skipped. y_prev is required only by TakiguchiAR (null on the first frame).
Eigen::VectorXd apply_model(const ObservationModelSpec& spec,
                            std::span<const Eigen::VectorXd> x_window,
                            const FrameLatents& latents,
                            const Eigen::VectorXd* y_prev);

/// Ancestral sampling q -> x -> latents -> y; deterministic per seed via
/// named counter streams keyed by (variable, frame).
SampledUtterance sample_utterance(const ObservationModelSpec& spec,
                                  const Hmm& clean_hmm, int length,
                                  uint64_t seed);

struct TakiguchiInverse {
  Eigen::VectorXd x;
  double log_det_jacobian = 0.0;
};

/// Inverts y_n = log(exp(h + x) + exp(alpha + y_prev)) and returns the
/// log-determinant of the diagonal Jacobian dy/dx for the change of
/// variables. Throws InvalidObservationError when y_n is not above the
/// reverberation-tail floor elementwise. y_prev == nullptr treats the tail
/// as absent (first frame).
TakiguchiInverse takiguchi_invert(const TakiguchiARModel& spec,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd* y_prev);

}  // namespace bnc

#endif  // BNC_OBS_MODEL_HPP
