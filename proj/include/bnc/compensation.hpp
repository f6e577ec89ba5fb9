#ifndef BNC_COMPENSATION_HPP
#define BNC_COMPENSATION_HPP

#include <memory>

#include "bnc/hmm.hpp"
#include "bnc/obs_model.hpp"
#include "bnc/train.hpp"

namespace bnc {

// ---------------------------------------------------------------------------
// One emission scorer or HMM transformer per compensation technique. Every
// scorer reduces to the conventional HMM at its neutral parameters, and every
// closed form is checked against quadrature in the test suites.
// ---------------------------------------------------------------------------

/// HMM with emissions replaced by a compensation technique; topology and
/// mixture weights are never touched.
struct AdaptedHmm {
  Hmm hmm;
  std::string technique;
  std::string parameters;
};

/// Per-regression-class affine observation parameters y = A x + b with
/// Gaussian bias stats (all-zero bias_var means a deterministic bias).
struct RegressionClass {
  Eigen::MatrixXd transform;
  Eigen::VectorXd bias_mean;
  Eigen::VectorXd bias_var;
};

/// Maps every (state, component) to exactly one regression class.
struct RegressionAssignment {
  std::vector<RegressionClass> classes;
  std::vector<std::vector<int>> class_of;  // [state][component]

  int class_for(int state, int component) const;
  void validate(const Hmm& hmm) const;
  /// One global class covering the whole model.
  static RegressionAssignment single_class(const Hmm& hmm, RegressionClass cls);
};

/// Conjugate prior over emission means: mean-precision weight tau (>= 0,
/// +infinity pins the prior mean) and per-Gaussian prior means (empty: the
/// model's current means).
struct MapPrior {
  double tau = 0.0;
  std::vector<std::vector<Eigen::VectorXd>> prior_means;
};

/// Gaussian prior over the frame-wise MLLR transform b = [A, c]: diagonal A
/// with independent entries, independent bias entries. Zero variances give
/// the deterministic (dirac) transform.
struct MllrParamPrior {
  Eigen::VectorXd a_mean;
  Eigen::VectorXd a_var;
  Eigen::VectorXd c_mean;
  Eigen::VectorXd c_var;
};

// --- uncertainty decoding -------------------------------------------------

/// p(y|q) per component: N(y; m_x|q, C_x|q + C_b_n) from the evidence bias
/// track.
std::unique_ptr<EmissionScorer> make_arrowood_scorer(const Hmm& hmm);

/// Scaled likelihood via the Gaussian overlap
/// N(m_x|q; m_x|y_n, C_x|q + C_x|y_n) from the evidence posterior track.
std::unique_ptr<EmissionScorer> make_dvc_scorer(const Hmm& hmm);

enum class SpliceVariant { kConvolution, kPriorModel };

/// Convolution variant: p(y|q) = sum_s p(s) N(y; m_x|q - r_s, C_x|q + G_s).
/// Prior-model variant: the ratio form with the normalizing denominator
/// collapsed to a single Gaussian by moment matching. A per-frame region
/// posterior in the evidence overrides p(s).
std::unique_ptr<EmissionScorer> make_splice_scorer(const Hmm& hmm,
                                                   const SpliceRegionsModel& spec,
                                                   SpliceVariant variant);

/// Joint uncertainty decoding: per component
/// N(y; A m + m_b, A C A^T + C_b) with per-class stochastic bias.
std::unique_ptr<EmissionScorer> make_jud_scorer(const Hmm& hmm,
                                                const RegressionAssignment& assignment);

/// Ion et al.: int p(x|y_1:N)/p(x) p(x|q) dx in closed form; posterior from
/// the evidence track, p(x) a separate single Gaussian. Diagonal only; the
/// prior must not be sharper than the posterior in any dimension.
std::unique_ptr<EmissionScorer> make_ion_scorer(const Hmm& hmm, Gaussian clean_prior);

// --- missing feature -------------------------------------------------------

enum class MissingFeatureMode { kImputation, kMarginalization };

/// Per-dimension clean-speech marginals p(x^(d)) for marginalization; when
/// flat_marginal is set unreliable dimensions contribute score 0 instead.
struct CleanMarginals {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

std::unique_ptr<EmissionScorer> make_missing_feature_scorer(
    const Hmm& hmm, MissingFeatureMode mode,
    std::optional<CleanMarginals> marginals = std::nullopt,
    bool flat_marginal = false);

/// x-hat = argmax_x p(x|q) p(x|y) (precision-weighted mean), scored in the
/// state pdf.
std::unique_ptr<EmissionScorer> make_modified_imputation_scorer(const Hmm& hmm);

/// log max_x p(x|q) p(x|y): the Gaussian-product peak.
std::unique_ptr<EmissionScorer> make_significance_scorer(const Hmm& hmm);

// --- model adaptation ------------------------------------------------------

enum class PmcApprox { kLogAdd, kLogNormal, kQuadrature };

/// Stationary parallel model combination for y = log(alpha exp(x) + exp(b)).
/// kQuadrature moment-matches through per-dimension 2-D numeric integration
/// (oracle-grade, D <= 2).
AdaptedHmm pmc_adapt(const Hmm& hmm, const PmcLogSumModel& spec, PmcApprox approx);

/// Joint scorer p(y | q, q-bar) for viterbi_3d, with p(b | q-bar) taken from
/// the noise HMM's per-state Gaussians.
std::unique_ptr<JointEmissionScorer> make_pmc_noise_hmm_scorer(
    const Hmm& speech, const PmcLogSumModel& spec, PmcApprox approx);

/// First-order VTS expansion of y = log(exp(h + x) + exp(c)) around
/// [m_x|k, m_h, m_c]: mean = f(point), cov = G C_x G + G C_h G + (I-G) C_c (I-G).
AdaptedHmm vts_adapt(const Hmm& hmm, const VtsLogSumModel& spec);

/// Diagonal Jacobian dy/dx of the VTS observation model at the expansion
/// point for the given component mean.
Eigen::VectorXd vts_jacobian(const VtsLogSumModel& spec, const Eigen::VectorXd& mu_x);

/// CMLLR: mean <- A m + b, cov <- A C A^T; bias must be deterministic.
AdaptedHmm cmllr_transform(const Hmm& hmm, const RegressionAssignment& assignment);

/// MLLR on means only; covariances unchanged.
AdaptedHmm mllr_adapt_means(const Hmm& hmm, const RegressionAssignment& assignment);

/// MAP re-estimation of emission means from aligned adaptation data:
/// mean = (tau m_0 + sum gamma y) / (tau + sum gamma), component
/// occupancies iterated by EM until the MAP objective moves < 1e-8.
AdaptedHmm map_adapt_means(const Hmm& hmm, const MapPrior& prior,
                           std::span<const LabeledSequence> data,
                           std::vector<double>* objective_trace = nullptr,
                           int max_iterations = 100);

/// Frame-wise Bayesian MLLR: p(y|q) = int N(y; A m + c, C) p(A, c) d(A, c)
/// = N(y; a m + c, C + diag(a_var m^2 + c_var)).
std::unique_ptr<EmissionScorer> make_bayesian_mllr_scorer(const Hmm& hmm,
                                                          const MllrParamPrior& prior);

/// Reverberant VTS over the extended vector [x_{n-L}, ..., x_n]; previous
/// frames use occupancy-averaged clean statistics. Requires L >= 1 (use
/// vts_adapt for L = 0).
AdaptedHmm rev_vts_adapt(const Hmm& hmm, const ReverbLogSumModel& spec);

/// Occupancy-weighted single-Gaussian moment match of all emissions.
/// Occupancies are the stationary distribution of the transition matrix.
void averaged_clean_stats(const Hmm& hmm, Eigen::VectorXd* mean, Eigen::VectorXd* var);

enum class ReverbMoment { kLogAdd, kLogNormal };

/// Hirsch/Raut-style static adaptation of the noise-free log-sum model:
/// log-add on means, optionally log-normal moment matching on covariances.
AdaptedHmm reverb_static_adapt(const Hmm& hmm, const ReverbLogSumModel& spec,
                               ReverbMoment moment);

/// Sehr-style online variant: previous-mean terms recomputed per frame from
/// the decoder's best partial path (frames the path does not reach fall back
/// to the occupancy average, which makes the 1-state case coincide with the
/// static variant).
std::unique_ptr<EmissionScorer> make_partial_path_reverb_scorer(
    const Hmm& hmm, const ReverbLogSumModel& spec, ReverbMoment moment);

/// Takiguchi autoregressive compensation for decode_conditional with
/// psi = (1): score = log p(x_n|q_n) - log|det J|; frames outside the
/// invertibility region score -inf.
std::unique_ptr<EmissionScorer> make_takiguchi_scorer(const Hmm& hmm,
                                                      const TakiguchiARModel& spec);

namespace detail {
/// y = A x + b push-through shared by JUD, CMLLR and MLLR; keeping one code
/// path makes their consistency pairs exact.
Gaussian affine_push_for_adapt(const Gaussian& g, const Eigen::MatrixXd& transform,
                               const Eigen::VectorXd& bias_mean,
                               const Eigen::VectorXd& bias_var, bool adapt_cov);
}  // namespace detail

}  // namespace bnc

#endif  // BNC_COMPENSATION_HPP
