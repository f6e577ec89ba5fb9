#include <cmath>
#include <limits>

#include "bnc/compensation.hpp"
#include "bnc/errors.hpp"

namespace bnc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
const double kNegInf = -std::numeric_limits<double>::infinity();

double normal_log_pdf_1d(double x, double mean, double var) {
  const double diff = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + diff * diff / var);
}

void require_diagonal(const Hmm& hmm, const char* technique) {
  for (const auto& g : hmm.emissions)
    for (const auto& c : g.components)
      if (!c.is_diagonal())
        throw ValidationError(std::string(technique) + ": diagonal emissions required");
}

// 1 / (1 + exp(c - a)): the x-derivative of log(exp(a) + exp(c)).
double sigmoid_diff(double a, double c) { return 1.0 / (1.0 + std::exp(c - a)); }

// Linear-domain moments of exp(Z), Z ~ N(mu, v).
double lognormal_mean(double mu, double v) { return std::exp(mu + 0.5 * v); }
double lognormal_var(double mu, double v) {
  const double m = lognormal_mean(mu, v);
  return m * m * (std::exp(v) - 1.0);
}

// Per-dimension moments of y = log(alpha exp(x) + exp(b)) given independent
// scalar Gaussians, by 2-D midpoint quadrature over (x, b).
void pmc_quadrature_moments_1d(double alpha, double mx, double vx, double mb,
                               double vb, double* mean_out, double* var_out) {
  const int pts = 512;
  const double sx = std::sqrt(std::max(vx, kVarianceFloor));
  const double sb = std::sqrt(std::max(vb, kVarianceFloor));
  const double xlo = mx - 10.0 * sx, xhi = mx + 10.0 * sx;
  const double blo = mb - 10.0 * sb, bhi = mb + 10.0 * sb;
  const double dx = (xhi - xlo) / pts, db = (bhi - blo) / pts;
  const double log_alpha = std::log(alpha);
  double w_sum = 0.0, m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < pts; ++i) {
    const double x = xlo + (i + 0.5) * dx;
    const double wx = std::exp(normal_log_pdf_1d(x, mx, vx));
    for (int j = 0; j < pts; ++j) {
      const double b = blo + (j + 0.5) * db;
      const double w = wx * std::exp(normal_log_pdf_1d(b, mb, vb));
      const double y = log_add(log_alpha + x, b);
      w_sum += w;
      m1 += w * y;
      m2 += w * y * y;
    }
  }
  m1 /= w_sum;
  m2 /= w_sum;
  *mean_out = m1;
  *var_out = std::max(m2 - m1 * m1, 0.0);
}

// Stationary PMC rule for one Gaussian component against one noise pdf.
Gaussian pmc_component(const Gaussian& comp, double alpha,
                       const DiagGaussianParam& noise, PmcApprox approx) {
  const int d = comp.dim();
  const double log_alpha = std::log(alpha);
  Eigen::VectorXd mean(d), var(d);
  switch (approx) {
    case PmcApprox::kLogAdd:
      for (int i = 0; i < d; ++i) {
        mean[i] = log_add(log_alpha + comp.mean()[i], noise.mean[i]);
        var[i] = comp.diag_var()[i];
      }
      break;
    case PmcApprox::kLogNormal:
      for (int i = 0; i < d; ++i) {
        // alpha exp(X): shift the log-domain mean by log(alpha).
        const double m_lin = lognormal_mean(log_alpha + comp.mean()[i], comp.diag_var()[i]) +
                             lognormal_mean(noise.mean[i], noise.var[i]);
        const double v_lin = lognormal_var(log_alpha + comp.mean()[i], comp.diag_var()[i]) +
                             lognormal_var(noise.mean[i], noise.var[i]);
        const double vy = std::log1p(v_lin / (m_lin * m_lin));
        var[i] = vy;
        mean[i] = std::log(m_lin) - 0.5 * vy;
      }
      break;
    case PmcApprox::kQuadrature:
      for (int i = 0; i < d; ++i)
        pmc_quadrature_moments_1d(alpha, comp.mean()[i], comp.diag_var()[i],
                                  noise.mean[i], noise.var[i], &mean[i], &var[i]);
      break;
  }
  return Gaussian(std::move(mean), std::move(var));
}

const char* pmc_approx_name(PmcApprox a) {
  switch (a) {
    case PmcApprox::kLogAdd: return "log_add";
    case PmcApprox::kLogNormal: return "log_normal";
    case PmcApprox::kQuadrature: return "quadrature";
  }
  return "?";
}

}  // namespace

AdaptedHmm pmc_adapt(const Hmm& hmm, const PmcLogSumModel& spec, PmcApprox approx) {
  hmm.validate();
  require_diagonal(hmm, "pmc");
  validate_spec(ObservationModelSpec(spec), hmm.dim());
  if (approx == PmcApprox::kQuadrature && hmm.dim() > 2)
    throw ValidationError("pmc: quadrature mode supports D <= 2 only");

  AdaptedHmm out{hmm, std::string("pmc.") + pmc_approx_name(approx), ""};
  const double log_alpha = std::log(spec.level_alpha);
  for (auto& gmm : out.hmm.emissions) {
    for (auto& comp : gmm.components) {
      if (!spec.noise) {
        // Noise term absent: y = x + log(alpha) exactly.
        comp = Gaussian(Eigen::VectorXd(comp.mean().array() + log_alpha),
                        comp.diag_var());
      } else {
        comp = pmc_component(comp, spec.level_alpha, *spec.noise, approx);
      }
    }
  }
  return out;
}

namespace {

class PmcNoiseHmmScorer : public JointEmissionScorer {
 public:
  PmcNoiseHmmScorer(const Hmm& speech, const PmcLogSumModel& spec, PmcApprox approx)
      : speech_(speech) {
    if (!spec.noise_hmm)
      throw ValidationError("pmc noise-HMM scorer: spec lacks a noise HMM");
    speech_.validate();
    validate_spec(ObservationModelSpec(spec), speech_.dim());
    const Hmm& noise = *spec.noise_hmm;
    // Adapted emission per (speech state, component, noise state) pair.
    adapted_.resize(speech_.num_states());
    for (int q = 0; q < speech_.num_states(); ++q) {
      const Gmm& gmm = speech_.emissions[q];
      adapted_[q].resize(gmm.num_components());
      for (int k = 0; k < gmm.num_components(); ++k) {
        for (int qb = 0; qb < noise.num_states(); ++qb) {
          const Gaussian& ng = noise.emissions[qb].components[0];
          DiagGaussianParam noise_pdf{ng.mean(), ng.diag_var()};
          adapted_[q][k].push_back(pmc_component(
              gmm.components[k], spec.level_alpha, noise_pdf, approx));
        }
      }
    }
  }

  LogProb score(int, int speech_state, int noise_state,
                const FrameEvidence& ev) const override {
    const Gmm& gmm = speech_.emissions.at(speech_state);
    return mix_components(gmm, std::nullopt, [&](int k) {
      return adapted_[speech_state][k][noise_state].log_pdf(ev.observed);
    });
  }

 private:
  Hmm speech_;
  std::vector<std::vector<std::vector<Gaussian>>> adapted_;
};

}  // namespace

std::unique_ptr<JointEmissionScorer> make_pmc_noise_hmm_scorer(
    const Hmm& speech, const PmcLogSumModel& spec, PmcApprox approx) {
  return std::make_unique<PmcNoiseHmmScorer>(speech, spec, approx);
}

Eigen::VectorXd vts_jacobian(const VtsLogSumModel& spec, const Eigen::VectorXd& mu_x) {
  const int d = static_cast<int>(mu_x.size());
  Eigen::VectorXd g(d);
  for (int i = 0; i < d; ++i) {
    const double a = spec.conv.mean[i] + mu_x[i];
    g[i] = spec.noise ? sigmoid_diff(a, spec.noise->mean[i]) : 1.0;
  }
  return g;
}

AdaptedHmm vts_adapt(const Hmm& hmm, const VtsLogSumModel& spec) {
  hmm.validate();
  require_diagonal(hmm, "vts");
  validate_spec(ObservationModelSpec(spec), hmm.dim());

  AdaptedHmm out{hmm, "vts", ""};
  for (auto& gmm : out.hmm.emissions) {
    for (auto& comp : gmm.components) {
      const int d = comp.dim();
      Eigen::VectorXd mean(d), var(d);
      const Eigen::VectorXd g = vts_jacobian(spec, comp.mean());
      for (int i = 0; i < d; ++i) {
        const double a = spec.conv.mean[i] + comp.mean()[i];
        mean[i] = spec.noise ? log_add(a, spec.noise->mean[i]) : a;
        const double gi = g[i];
        var[i] = gi * gi * (comp.diag_var()[i] + spec.conv.var[i]);
        if (spec.noise) var[i] += (1.0 - gi) * (1.0 - gi) * spec.noise->var[i];
      }
      comp = Gaussian(std::move(mean), std::move(var));
    }
  }
  return out;
}

AdaptedHmm cmllr_transform(const Hmm& hmm, const RegressionAssignment& assignment) {
  hmm.validate();
  assignment.validate(hmm);
  for (const auto& cls : assignment.classes)
    if (cls.bias_var.cwiseAbs().maxCoeff() != 0.0)
      throw ValidationError("cmllr: bias must be deterministic (zero variance)");

  AdaptedHmm out{hmm, "cmllr", ""};
  for (int s = 0; s < hmm.num_states(); ++s) {
    Gmm& gmm = out.hmm.emissions[s];
    for (int k = 0; k < gmm.num_components(); ++k) {
      const auto& cls = assignment.classes[assignment.class_for(s, k)];
      gmm.components[k] = detail::affine_push_for_adapt(
          gmm.components[k], cls.transform, cls.bias_mean, cls.bias_var,
          /*adapt_cov=*/true);
    }
  }
  return out;
}

AdaptedHmm mllr_adapt_means(const Hmm& hmm, const RegressionAssignment& assignment) {
  hmm.validate();
  assignment.validate(hmm);

  AdaptedHmm out{hmm, "mllr", ""};
  for (int s = 0; s < hmm.num_states(); ++s) {
    Gmm& gmm = out.hmm.emissions[s];
    for (int k = 0; k < gmm.num_components(); ++k) {
      const auto& cls = assignment.classes[assignment.class_for(s, k)];
      gmm.components[k] = detail::affine_push_for_adapt(
          gmm.components[k], cls.transform, cls.bias_mean, cls.bias_var,
          /*adapt_cov=*/false);
    }
  }
  return out;
}

AdaptedHmm map_adapt_means(const Hmm& hmm, const MapPrior& prior,
                           std::span<const LabeledSequence> data,
                           std::vector<double>* objective_trace,
                           int max_iterations) {
  hmm.validate();
  require_diagonal(hmm, "map");
  if (prior.tau < 0.0 || std::isnan(prior.tau))
    throw ValidationError("map: tau must be >= 0");
  const int S = hmm.num_states();

  std::vector<std::vector<Eigen::VectorXd>> prior_means(S);
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < hmm.emissions[s].num_components(); ++k) {
      prior_means[s].push_back(prior.prior_means.empty()
                                   ? hmm.emissions[s].components[k].mean()
                                   : prior.prior_means.at(s).at(k));
    }
  }

  AdaptedHmm out{hmm, "map", ""};

  if (std::isinf(prior.tau)) {
    // Prior domination: the posterior mode is the prior mean exactly.
    for (int s = 0; s < S; ++s)
      for (int k = 0; k < hmm.emissions[s].num_components(); ++k)
        out.hmm.emissions[s].components[k] =
            Gaussian(prior_means[s][k], hmm.emissions[s].components[k].diag_var());
    return out;
  }

  std::vector<std::vector<Eigen::VectorXd>> by_state(S);
  for (const auto& seq : data) {
    if (seq.frames.size() != seq.states.size())
      throw ValidationError("map: malformed labeled sequence");
    for (size_t n = 0; n < seq.frames.size(); ++n)
      by_state[seq.states[n]].push_back(seq.frames[n]);
  }

  // MAP objective: data log-likelihood plus log prior N(mu_k; m0_k, C_k/tau).
  const auto objective = [&]() {
    double obj = 0.0;
    for (int s = 0; s < S; ++s) {
      const Gmm& gmm = out.hmm.emissions[s];
      for (const auto& x : by_state[s]) obj += gmm.log_pdf(x);
      if (prior.tau > 0.0) {
        for (int k = 0; k < gmm.num_components(); ++k)
          for (int d = 0; d < gmm.dim(); ++d)
            obj += normal_log_pdf_1d(gmm.components[k].mean()[d],
                                     prior_means[s][k][d],
                                     gmm.components[k].diag_var()[d] / prior.tau);
      }
    }
    return obj;
  };

  double prev = objective();
  if (objective_trace) objective_trace->push_back(prev);
  for (int iter = 0; iter < max_iterations; ++iter) {
    for (int s = 0; s < S; ++s) {
      Gmm& gmm = out.hmm.emissions[s];
      const int K = gmm.num_components();
      const auto& xs = by_state[s];
      if (xs.empty() && prior.tau == 0.0) continue;  // no evidence, flat prior
      std::vector<double> occ(K, 0.0);
      std::vector<Eigen::VectorXd> acc(K, Eigen::VectorXd::Zero(hmm.dim()));
      for (const auto& x : xs) {
        std::vector<double> lp(K);
        for (int k = 0; k < K; ++k)
          lp[k] = (gmm.weights[k] > 0.0)
                      ? std::log(gmm.weights[k]) + gmm.components[k].log_pdf(x)
                      : kNegInf;
        const double norm = log_sum_exp(lp);
        for (int k = 0; k < K; ++k) {
          const double r = (norm == kNegInf) ? 1.0 / K : std::exp(lp[k] - norm);
          occ[k] += r;
          acc[k] += r * x;
        }
      }
      for (int k = 0; k < K; ++k) {
        const double denom = prior.tau + occ[k];
        if (denom <= 0.0) continue;  // tau = 0 and empty occupancy: keep ML-less mean
        const Eigen::VectorXd mean =
            (prior.tau * prior_means[s][k] + acc[k]) / denom;
        gmm.components[k] = Gaussian(mean, gmm.components[k].diag_var());
      }
    }
    const double cur = objective();
    if (objective_trace) objective_trace->push_back(cur);
    if (std::abs(cur - prev) < 1e-8) break;
    prev = cur;
  }
  return out;
}

namespace {

class BayesianMllrScorer : public EmissionScorer {
 public:
  BayesianMllrScorer(const Hmm& hmm, const MllrParamPrior& prior)
      : emissions_(hmm.emissions), prior_(prior) {
    require_diagonal(hmm, "bayesian mllr");
    const int d = hmm.dim();
    if (prior_.a_mean.size() != d || prior_.a_var.size() != d ||
        prior_.c_mean.size() != d || prior_.c_var.size() != d)
      throw ValidationError("bayesian mllr: prior dimension mismatch");
    if (prior_.a_var.minCoeff() < 0.0 || prior_.c_var.minCoeff() < 0.0)
      throw ValidationError("bayesian mllr: negative prior variance");
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      const Gaussian& comp = gmm.components[k];
      double acc = 0.0;
      for (int d = 0; d < comp.dim(); ++d) {
        const double mu = comp.mean()[d];
        // y_d = a_d mu_d + c_d + noise: Gaussian in the parameters.
        const double mean = prior_.a_mean[d] * mu + prior_.c_mean[d];
        const double var =
            comp.diag_var()[d] + prior_.a_var[d] * mu * mu + prior_.c_var[d];
        acc += normal_log_pdf_1d(ev.observed[d], mean, var);
      }
      return acc;
    });
  }

 private:
  std::vector<Gmm> emissions_;
  MllrParamPrior prior_;
};

}  // namespace

std::unique_ptr<EmissionScorer> make_bayesian_mllr_scorer(const Hmm& hmm,
                                                          const MllrParamPrior& prior) {
  return std::make_unique<BayesianMllrScorer>(hmm, prior);
}

void averaged_clean_stats(const Hmm& hmm, Eigen::VectorXd* mean,
                          Eigen::VectorXd* var) {
  const int S = hmm.num_states();
  const int D = hmm.dim();
  // Stationary distribution of the transition matrix: solve pi P = pi with
  // sum(pi) = 1 as a least-squares system (robust for periodic chains).
  Eigen::MatrixXd sys(S + 1, S);
  sys.topRows(S) = hmm.transitions.transpose() - Eigen::MatrixXd::Identity(S, S);
  sys.bottomRows(1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S + 1);
  rhs[S] = 1.0;
  Eigen::VectorXd occ = sys.colPivHouseholderQr().solve(rhs);
  occ = occ.cwiseMax(0.0);
  occ /= occ.sum();

  Eigen::VectorXd m = Eigen::VectorXd::Zero(D);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(D);
  for (int s = 0; s < S; ++s) {
    const Gmm& gmm = hmm.emissions[s];
    for (int k = 0; k < gmm.num_components(); ++k) {
      const double w = occ[s] * gmm.weights[k];
      m += w * gmm.components[k].mean();
      second += w * (gmm.components[k].diag_var() +
                     gmm.components[k].mean().cwiseAbs2());
    }
  }
  *mean = m;
  *var = (second - m.cwiseAbs2()).cwiseMax(0.0);
}

AdaptedHmm rev_vts_adapt(const Hmm& hmm, const ReverbLogSumModel& spec) {
  hmm.validate();
  require_diagonal(hmm, "rev_vts");
  validate_spec(ObservationModelSpec(spec), hmm.dim());
  const int L = spec.tail_length();
  if (L < 1) throw ValidationError("rev_vts: L must be >= 1 (use vts_adapt)");

  Eigen::VectorXd avg_mean, avg_var;
  averaged_clean_stats(hmm, &avg_mean, &avg_var);

  AdaptedHmm out{hmm, "rev_vts", ""};
  const int D = hmm.dim();
  for (auto& gmm : out.hmm.emissions) {
    for (auto& comp : gmm.components) {
      Eigen::VectorXd mean(D), var(D);
      for (int d = 0; d < D; ++d) {
        // Expansion point of the extended vector [avg, ..., avg, mu_x, m_b].
        std::vector<double> terms;
        terms.push_back(comp.mean()[d] + spec.taps[0][d]);
        for (int l = 1; l <= L; ++l)
          terms.push_back(avg_mean[d] + spec.taps[l][d]);
        if (spec.noise) terms.push_back(spec.noise->mean[d]);
        const double log_total = log_sum_exp(terms);
        mean[d] = log_total;
        double v = 0.0;
        const double g0 = std::exp(terms[0] - log_total);
        v += g0 * g0 * comp.diag_var()[d];
        for (int l = 1; l <= L; ++l) {
          const double gl = std::exp(terms[l] - log_total);
          v += gl * gl * avg_var[d];
        }
        if (spec.noise) {
          const double gb = std::exp(terms.back() - log_total);
          v += gb * gb * spec.noise->var[d];
        }
        var[d] = v;
      }
      comp = Gaussian(std::move(mean), std::move(var));
    }
  }
  return out;
}

namespace {

// Per-state weighted mean of the GMM's component means; the "averaged over
// all means of the corresponding GMM" term of the reverberant log-add rules.
std::vector<Eigen::VectorXd> per_state_mean(const Hmm& hmm) {
  std::vector<Eigen::VectorXd> out(hmm.num_states());
  for (int s = 0; s < hmm.num_states(); ++s) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(hmm.dim());
    const Gmm& gmm = hmm.emissions[s];
    for (int k = 0; k < gmm.num_components(); ++k)
      m += gmm.weights[k] * gmm.components[k].mean();
    out[s] = m;
  }
  return out;
}

std::vector<Eigen::VectorXd> per_state_var(const Hmm& hmm) {
  std::vector<Eigen::VectorXd> out(hmm.num_states());
  for (int s = 0; s < hmm.num_states(); ++s) {
    const Gmm& gmm = hmm.emissions[s];
    Eigen::VectorXd m = Eigen::VectorXd::Zero(hmm.dim());
    Eigen::VectorXd second = Eigen::VectorXd::Zero(hmm.dim());
    for (int k = 0; k < gmm.num_components(); ++k) {
      m += gmm.weights[k] * gmm.components[k].mean();
      second += gmm.weights[k] * (gmm.components[k].diag_var() +
                                  gmm.components[k].mean().cwiseAbs2());
    }
    out[s] = (second - m.cwiseAbs2()).cwiseMax(0.0);
  }
  return out;
}

// Reverberant log-sum emission for one component given per-lag previous-frame
// stats; log-add keeps the covariance, log-normal moment-matches it.
Gaussian reverb_component(const Gaussian& comp, const ReverbLogSumModel& spec,
                          ReverbMoment moment,
                          const std::vector<const Eigen::VectorXd*>& prev_means,
                          const std::vector<const Eigen::VectorXd*>& prev_vars) {
  const int D = comp.dim();
  const int L = spec.tail_length();
  Eigen::VectorXd mean(D), var(D);
  for (int d = 0; d < D; ++d) {
    if (moment == ReverbMoment::kLogAdd) {
      std::vector<double> terms;
      terms.push_back(comp.mean()[d] + spec.taps[0][d]);
      for (int l = 1; l <= L; ++l)
        if (prev_means[l - 1] != nullptr)
          terms.push_back((*prev_means[l - 1])[d] + spec.taps[l][d]);
      mean[d] = log_sum_exp(terms);
      var[d] = comp.diag_var()[d];
    } else {
      double m_lin = lognormal_mean(comp.mean()[d] + spec.taps[0][d],
                                    comp.diag_var()[d]);
      double v_lin = lognormal_var(comp.mean()[d] + spec.taps[0][d],
                                   comp.diag_var()[d]);
      for (int l = 1; l <= L; ++l) {
        if (prev_means[l - 1] == nullptr) continue;
        m_lin += lognormal_mean((*prev_means[l - 1])[d] + spec.taps[l][d],
                                (*prev_vars[l - 1])[d]);
        v_lin += lognormal_var((*prev_means[l - 1])[d] + spec.taps[l][d],
                               (*prev_vars[l - 1])[d]);
      }
      const double vy = std::log1p(v_lin / (m_lin * m_lin));
      var[d] = vy;
      mean[d] = std::log(m_lin) - 0.5 * vy;
    }
  }
  return Gaussian(std::move(mean), std::move(var));
}

class PartialPathReverbScorer : public EmissionScorer {
 public:
  PartialPathReverbScorer(const Hmm& hmm, const ReverbLogSumModel& spec,
                          ReverbMoment moment)
      : emissions_(hmm.emissions), spec_(spec), moment_(moment),
        state_means_(per_state_mean(hmm)), state_vars_(per_state_var(hmm)) {
    require_diagonal(hmm, "reverb partial path");
    validate_spec(ObservationModelSpec(spec), hmm.dim());
    if (spec_.noise)
      throw ValidationError("reverb adaptation: noise-free log-sum model expected");
    averaged_clean_stats(hmm, &avg_mean_, &avg_var_);
  }

  ScorerNeeds needs() const override {
    ScorerNeeds n;
    n.partial_path = true;
    return n;
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext& ctx) const override {
    const int L = spec_.tail_length();
    std::vector<const Eigen::VectorXd*> prev_means(L), prev_vars(L);
    for (int l = 1; l <= L; ++l) {
      const int m = req.frame - l;
      if (m >= 0 && m < static_cast<int>(ctx.partial_path.size())) {
        const int state = ctx.partial_path[m];
        prev_means[l - 1] = &state_means_[state];
        prev_vars[l - 1] = &state_vars_[state];
      } else {
        // Path does not reach this lag: fall back to the occupancy average
        // so the 1-state case coincides with the static variant.
        prev_means[l - 1] = &avg_mean_;
        prev_vars[l - 1] = &avg_var_;
      }
    }
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      return reverb_component(gmm.components[k], spec_, moment_, prev_means,
                              prev_vars)
          .log_pdf(ev.observed);
    });
  }

 private:
  std::vector<Gmm> emissions_;
  ReverbLogSumModel spec_;
  ReverbMoment moment_;
  std::vector<Eigen::VectorXd> state_means_, state_vars_;
  Eigen::VectorXd avg_mean_, avg_var_;
};

class TakiguchiScorer : public EmissionScorer {
 public:
  TakiguchiScorer(const Hmm& hmm, const TakiguchiARModel& spec)
      : emissions_(hmm.emissions), spec_(spec) {
    require_diagonal(hmm, "takiguchi");
    validate_spec(ObservationModelSpec(spec), hmm.dim());
  }

  ScorerNeeds needs() const override {
    ScorerNeeds n;
    n.past_shifts = {1};
    return n;
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext& ctx) const override {
    const Eigen::VectorXd* y_prev =
        ctx.past.empty() ? nullptr : ctx.past.front();
    try {
      const TakiguchiInverse inv = takiguchi_invert(spec_, ev.observed, y_prev);
      const Gmm& gmm = emissions_.at(req.state);
      return gmm.log_pdf(inv.x) - inv.log_det_jacobian;
    } catch (const InvalidObservationError&) {
      return kNegInf;
    }
  }

 private:
  std::vector<Gmm> emissions_;
  TakiguchiARModel spec_;
};

}  // namespace

AdaptedHmm reverb_static_adapt(const Hmm& hmm, const ReverbLogSumModel& spec,
                               ReverbMoment moment) {
  hmm.validate();
  require_diagonal(hmm, "reverb adaptation");
  validate_spec(ObservationModelSpec(spec), hmm.dim());
  if (spec.noise)
    throw ValidationError("reverb adaptation: noise-free log-sum model expected");

  Eigen::VectorXd avg_mean, avg_var;
  averaged_clean_stats(hmm, &avg_mean, &avg_var);
  const int L = spec.tail_length();
  std::vector<const Eigen::VectorXd*> prev_means(L, &avg_mean);
  std::vector<const Eigen::VectorXd*> prev_vars(L, &avg_var);

  AdaptedHmm out{hmm,
                 moment == ReverbMoment::kLogAdd ? "reverb.static_prior"
                                                 : "reverb.static_prior.log_normal",
                 ""};
  for (auto& gmm : out.hmm.emissions)
    for (auto& comp : gmm.components)
      comp = reverb_component(comp, spec, moment, prev_means, prev_vars);
  return out;
}

std::unique_ptr<EmissionScorer> make_partial_path_reverb_scorer(
    const Hmm& hmm, const ReverbLogSumModel& spec, ReverbMoment moment) {
  return std::make_unique<PartialPathReverbScorer>(hmm, spec, moment);
}

std::unique_ptr<EmissionScorer> make_takiguchi_scorer(const Hmm& hmm,
                                                      const TakiguchiARModel& spec) {
  return std::make_unique<TakiguchiScorer>(hmm, spec);
}

}  // namespace bnc
