#include "bnc/oracle.hpp"

#include <cmath>
#include <limits>

#include "bnc/errors.hpp"

namespace bnc {

namespace {
const double kNegInf = -std::numeric_limits<double>::infinity();
}

QuadratureConfig QuadratureConfig::over(
    std::vector<std::pair<double, double>> b, int pts) {
  QuadratureConfig cfg;
  cfg.bounds = std::move(b);
  cfg.points = pts;
  return cfg;
}

QuadratureConfig bounds_for_factors(const std::vector<Gaussian>& factors,
                                    int points) {
  if (factors.empty()) throw ValidationError("bounds_for_factors: no factors");
  const int d = factors.front().dim();
  std::vector<std::pair<double, double>> bounds(
      d, {std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()});
  for (const auto& g : factors) {
    for (int i = 0; i < d; ++i) {
      const double sigma = std::sqrt(g.is_diagonal() ? g.diag_var()[i]
                                                     : g.full_cov()(i, i));
      bounds[i].first = std::min(bounds[i].first, g.mean()[i] - 10.0 * sigma);
      bounds[i].second = std::max(bounds[i].second, g.mean()[i] + 10.0 * sigma);
    }
  }
  return QuadratureConfig::over(std::move(bounds), points);
}

LogProb quadrature_log_integral(
    const std::function<double(const Eigen::VectorXd&)>& log_integrand,
    const QuadratureConfig& cfg) {
  const int dims = static_cast<int>(cfg.bounds.size());
  if (dims < 1 || dims > 3)
    throw ValidationError("quadrature: dimension must be 1..3");
  if (cfg.points < 64) throw ValidationError("quadrature: points must be >= 64");

  const int P = cfg.points;
  std::vector<double> step(dims);
  double log_cell = 0.0;
  for (int d = 0; d < dims; ++d) {
    const auto [lo, hi] = cfg.bounds[d];
    if (!(hi > lo)) throw ValidationError("quadrature: empty bounds");
    const int cells = (cfg.rule == QuadratureConfig::Rule::kMidpoint) ? P : P - 1;
    step[d] = (hi - lo) / cells;
    log_cell += std::log(step[d]);
  }

  long total = 1;
  for (int d = 0; d < dims; ++d) total *= P;

  std::vector<double> values;
  values.reserve(total);
  double boundary_max = kNegInf;
  Eigen::VectorXd u(dims);
  std::vector<int> idx(dims, 0);
  for (long it = 0; it < total; ++it) {
    long rem = it;
    bool on_boundary = false;
    double log_weight = 0.0;
    for (int d = 0; d < dims; ++d) {
      idx[d] = static_cast<int>(rem % P);
      rem /= P;
      const auto [lo, hi] = cfg.bounds[d];
      if (cfg.rule == QuadratureConfig::Rule::kMidpoint) {
        u[d] = lo + (idx[d] + 0.5) * step[d];
      } else {
        u[d] = lo + idx[d] * step[d];
        if (idx[d] == 0 || idx[d] == P - 1) log_weight += std::log(0.5);
      }
      on_boundary = on_boundary || idx[d] == 0 || idx[d] == P - 1;
    }
    const double v = log_integrand(u) + log_weight;
    if (std::isnan(v)) throw NumericError("quadrature: NaN integrand");
    values.push_back(v);
    if (on_boundary) boundary_max = std::max(boundary_max, v);
  }

  const double log_total = log_sum_exp(values);
  if (log_total == kNegInf) return kNegInf;
  // Boundary-mass check: any boundary cell carrying more than 1e-10 of the
  // total indicates bounds that do not cover the mass.
  if (boundary_max - log_total > std::log(1e-10))
    throw NumericError("quadrature: bounds do not cover the integrand mass");
  return log_total + log_cell;
}

LogProb quadrature_emission(const EmissionIntegrand& integrand,
                            const Eigen::VectorXd& y,
                            const QuadratureConfig* cfg) {
  integrand.state.validate();
  const int d = integrand.state.dim();
  if (static_cast<int>(y.size()) != d ||
      static_cast<int>(integrand.cond_mean.size()) != d ||
      static_cast<int>(integrand.cond_var.size()) != d)
    throw ValidationError("quadrature_emission: dimension mismatch");
  if (integrand.cond_var.minCoeff() < 0.0)
    throw ValidationError("quadrature_emission: negative conditional variance");

  if (integrand.cond_var.maxCoeff() == 0.0) {
    // Dirac conditional: the integral collapses by substitution.
    return integrand.state.log_pdf(y - integrand.cond_mean);
  }

  QuadratureConfig local;
  if (cfg == nullptr) {
    std::vector<Gaussian> factors = integrand.state.components;
    factors.emplace_back(Eigen::VectorXd(y - integrand.cond_mean),
                         Eigen::VectorXd(integrand.cond_var));
    local = bounds_for_factors(factors);
    cfg = &local;
  }
  const Gaussian conditional(integrand.cond_mean, integrand.cond_var);
  return quadrature_log_integral(
      [&](const Eigen::VectorXd& x) {
        return integrand.state.log_pdf(x) + conditional.log_pdf(y - x);
      },
      *cfg);
}

namespace {

// Walks all state sequences recursively; emissions are pre-tabulated except
// for prev-state-dependent scorers, which are evaluated on the fly.
struct Enumerator {
  const Hmm& hmm;
  const EmissionScorer& scorer;
  std::span<const FrameEvidence> evidence;
  bool edge_emissions = false;
  std::vector<int> shifts;
  Eigen::MatrixXd emit;  // (state, frame), when !edge_emissions
  Eigen::VectorXd log_init;
  Eigen::MatrixXd log_trans;

  std::vector<double> sums;
  double best = kNegInf;
  std::vector<int> best_path;
  std::vector<int> cur;

  double emission(int n, int q, std::optional<int> prev) const {
    if (!edge_emissions) return emit(q, n);
    ScoreRequest req;
    req.frame = n;
    req.state = q;
    req.prev_state = prev;
    DecodeContext ctx;
    std::vector<const Eigen::VectorXd*> past(shifts.size());
    for (size_t i = 0; i < shifts.size(); ++i) {
      const int m = n - shifts[i];
      past[i] = (m >= 0) ? &evidence[m].observed : nullptr;
    }
    ctx.past = std::move(past);
    return scorer.score(req, evidence[n], ctx);
  }

  // Lexicographic-from-the-back comparison: smaller means preferred.
  bool prefer(const std::vector<int>& cand) const {
    for (size_t i = cand.size(); i-- > 0;) {
      if (cand[i] != best_path[i]) return cand[i] < best_path[i];
    }
    return false;
  }

  void walk(int n, double acc, BruteForceMode mode) {
    const int N = static_cast<int>(evidence.size());
    if (n == N) {
      if (mode == BruteForceMode::kSum) {
        sums.push_back(acc);
      } else if (acc > best || (acc == best && (best_path.empty() || prefer(cur)))) {
        best = acc;
        best_path = cur;
      }
      return;
    }
    for (int q = 0; q < hmm.num_states(); ++q) {
      const double trans =
          (n == 0) ? log_init[q] : log_trans(cur[n - 1], q);
      const double e =
          emission(n, q, n == 0 ? std::nullopt : std::optional<int>(cur[n - 1]));
      cur[n] = q;
      walk(n + 1, acc + trans + e, mode);
    }
  }
};

}  // namespace

BruteForceResult brute_force_sequence_score(const Hmm& hmm,
                                            const EmissionScorer& scorer,
                                            std::span<const FrameEvidence> evidence,
                                            BruteForceMode mode) {
  if (evidence.empty()) throw ValidationError("brute_force: empty sequence");
  hmm.validate();
  const int S = hmm.num_states();
  const int N = static_cast<int>(evidence.size());
  if (std::pow(static_cast<double>(S), N) > 1e6)
    throw ValidationError("brute_force: instance too large (S^N > 1e6)");
  const ScorerNeeds needs = scorer.needs();
  if (needs.partial_path)
    throw ValidationError("brute_force: partial-path scorers are decoder-defined");

  Enumerator en{hmm, scorer, evidence, false, {}, {}, {}, {}, {}, kNegInf, {}, {}};
  en.edge_emissions = needs.prev_state || !needs.past_shifts.empty();
  en.shifts = needs.past_shifts;
  en.log_init = hmm.initial.array().log().matrix();
  en.log_trans = hmm.transitions.array().log().matrix();
  en.cur.resize(N);
  if (!en.edge_emissions) {
    en.emit.resize(S, N);
    for (int n = 0; n < N; ++n)
      for (int q = 0; q < S; ++q) {
        ScoreRequest req;
        req.frame = n;
        req.state = q;
        en.emit(q, n) = scorer.score(req, evidence[n], DecodeContext{});
      }
  }
  en.walk(0, 0.0, mode);

  BruteForceResult res;
  if (mode == BruteForceMode::kSum) {
    res.log_score = log_sum_exp(en.sums);
  } else {
    res.log_score = en.best;
    res.path = en.best_path;
  }
  return res;
}

BruteForceResult brute_force_joint_score(const Hmm& speech, const Hmm& noise,
                                         const JointEmissionScorer& scorer,
                                         std::span<const FrameEvidence> evidence,
                                         BruteForceMode mode) {
  // Reduce to the plain enumeration over the product machine.
  const int T = noise.num_states();
  Hmm product;
  const int S = speech.num_states();
  product.initial.resize(S * T);
  product.transitions.resize(S * T, S * T);
  for (int j = 0; j < S * T; ++j) {
    product.initial[j] = speech.initial[j / T] * noise.initial[j % T];
    for (int i = 0; i < S * T; ++i)
      product.transitions(i, j) =
          speech.transitions(i / T, j / T) * noise.transitions(i % T, j % T);
  }
  Gaussian dummy(Eigen::VectorXd::Zero(1), Eigen::VectorXd(Eigen::VectorXd::Ones(1)));
  product.emissions.assign(S * T, Gmm::single(dummy));

  struct ProductScorer : EmissionScorer {
    const JointEmissionScorer& joint;
    int T;
    ProductScorer(const JointEmissionScorer& j, int t) : joint(j), T(t) {}
    LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                  const DecodeContext&) const override {
      return joint.score(req.frame, req.state / T, req.state % T, ev);
    }
  } ps(scorer, T);

  return brute_force_sequence_score(product, ps, evidence, mode);
}

McMomentResult mc_moment_check(
    const ObservationModelSpec& spec, const Hmm& clean_hmm, int frames_per_utt,
    const std::function<void(const SampledUtterance&, std::vector<double>&)>& statistic,
    int n_samples, uint64_t seed) {
  if (n_samples < 1000)
    throw ValidationError("mc_moment_check: n_samples must be >= 1e3");
  std::vector<double> obs;
  const SeedStream root(seed);
  for (int i = 0; i < n_samples; ++i) {
    const SampledUtterance utt = sample_utterance(
        spec, clean_hmm, frames_per_utt, root.at("utt").at(static_cast<uint64_t>(i)).state());
    statistic(utt, obs);
  }
  McMomentResult res;
  res.count = obs.size();
  if (obs.empty()) return res;
  double mean = 0.0;
  for (double v : obs) mean += v;
  mean /= static_cast<double>(obs.size());
  double var = 0.0;
  for (double v : obs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(obs.size());
  res.estimate = mean;
  res.stderr_ = std::sqrt(var / static_cast<double>(obs.size()));
  return res;
}

}  // namespace bnc
