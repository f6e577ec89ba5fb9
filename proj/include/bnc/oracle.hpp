#ifndef BNC_ORACLE_HPP
#define BNC_ORACLE_HPP

#include <functional>

#include "bnc/decode.hpp"
#include "bnc/hmm.hpp"
#include "bnc/obs_model.hpp"

namespace bnc {

// ---------------------------------------------------------------------------
// Independent, slow, obviously-correct evaluators. These deliberately avoid
// the closed-form identities they are used to verify.
// ---------------------------------------------------------------------------

struct QuadratureConfig {
  std::vector<std::pair<double, double>> bounds;  // per dimension
  int points = 2048;                              // per dimension, >= 64
  enum class Rule { kMidpoint, kTrapezoid } rule = Rule::kMidpoint;

  static QuadratureConfig over(std::vector<std::pair<double, double>> b,
                               int pts = 2048);
};

/// log of the Riemann approximation of integral exp(log_integrand(u)) du over
/// the configured box (<= 3 dimensions). Throws NumericError when more than
/// 1e-10 of the total mass sits in boundary cells (bounds too tight).
LogProb quadrature_log_integral(
    const std::function<double(const Eigen::VectorXd&)>& log_integrand,
    const QuadratureConfig& cfg);

/// Bounds covering mean +/- 10 sigma of every listed diagonal factor.
QuadratureConfig bounds_for_factors(const std::vector<Gaussian>& factors,
                                    int points = 2048);

/// Defining emission integral int p(x|q) p(y|x) dx for the additive
/// conditional p(y|x) = N(y; x + cond_mean, diag(cond_var)).
struct EmissionIntegrand {
  Gmm state;
  Eigen::VectorXd cond_mean;
  Eigen::VectorXd cond_var;  // all-zero: dirac conditional
};

/// Numeric value of the emission integral at y. A dirac conditional is
/// handled by substitution and equals the direct pdf. cfg defaults to
/// bounds_for_factors over all participating factors.
LogProb quadrature_emission(const EmissionIntegrand& integrand,
                            const Eigen::VectorXd& y,
                            const QuadratureConfig* cfg = nullptr);

enum class BruteForceMode { kSum, kMax };

struct BruteForceResult {
  LogProb log_score;
  std::vector<int> path;  // max mode only
};

/// Exact enumeration over all S^N state sequences (S^N <= 1e6). In max mode
/// ties resolve to the path that is lexicographically smallest read from the
/// last frame backwards, matching the Viterbi tie-break.
BruteForceResult brute_force_sequence_score(const Hmm& hmm,
                                            const EmissionScorer& scorer,
                                            std::span<const FrameEvidence> evidence,
                                            BruteForceMode mode);

/// Exhaustive counterpart of viterbi_3d / the noise-HMM sum.
BruteForceResult brute_force_joint_score(const Hmm& speech, const Hmm& noise,
                                         const JointEmissionScorer& scorer,
                                         std::span<const FrameEvidence> evidence,
                                         BruteForceMode mode);

struct McMomentResult {
  double estimate = 0.0;
  double stderr_ = 0.0;
  size_t count = 0;
};

/// Seeded Monte-Carlo estimate of a per-utterance statistic; the statistic
/// appends any number of scalar observations per sampled utterance.
McMomentResult mc_moment_check(
    const ObservationModelSpec& spec, const Hmm& clean_hmm, int frames_per_utt,
    const std::function<void(const SampledUtterance&, std::vector<double>&)>& statistic,
    int n_samples, uint64_t seed);

}  // namespace bnc

#endif  // BNC_ORACLE_HPP
