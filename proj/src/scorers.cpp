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

// --- Arrowood ---------------------------------------------------------------

class ArrowoodScorer : public EmissionScorer {
 public:
  explicit ArrowoodScorer(const Hmm& hmm) : emissions_(hmm.emissions) {}

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    if (!ev.bias)
      throw ValidationError("arrowood: evidence frame lacks a bias track");
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      return convolve(gmm.components[k], ev.bias->mean, ev.bias->var)
          .log_pdf(ev.observed);
    });
  }

 private:
  std::vector<Gmm> emissions_;
};

// --- Dynamic variance compensation ------------------------------------------

class DvcScorer : public EmissionScorer {
 public:
  explicit DvcScorer(const Hmm& hmm) : emissions_(hmm.emissions) {
    require_diagonal(hmm, "dvc");
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    if (!ev.posterior)
      throw ValidationError("dvc: evidence frame lacks a posterior track");
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      // N(m_x|q; m_x|y, C_x|q + C_x|y)
      const Gaussian& c = gmm.components[k];
      return Gaussian(ev.posterior->mean,
                      Eigen::VectorXd(c.diag_var() + ev.posterior->var))
          .log_pdf(c.mean());
    });
  }

 private:
  std::vector<Gmm> emissions_;
};

// --- SPLICE ------------------------------------------------------------------

// Direct evaluation of log int N(x; mp, vp)/N(x; m0, v0) N(x; mq, vq) dx per
// dimension by completing the square; requires 1/vp - 1/v0 >= 0.
double ratio_overlap_1d(double mp, double vp, double m0, double v0, double mq,
                        double vq) {
  const double lambda = 1.0 / vp - 1.0 / v0;
  if (lambda < 0.0)
    throw NumericError("ratio integral: prior sharper than posterior");
  const double a = lambda + 1.0 / vq;
  const double b = mp / vp - m0 / v0 + mq / vq;
  const double c = mp * mp / vp - m0 * m0 / v0 + mq * mq / vq;
  return -0.5 * (c - b * b / a) - 0.5 * std::log(a) - 0.5 * std::log(vp) +
         0.5 * std::log(v0) - 0.5 * std::log(vq);
}

class SpliceScorer : public EmissionScorer {
 public:
  SpliceScorer(const Hmm& hmm, const SpliceRegionsModel& spec,
               SpliceVariant variant)
      : emissions_(hmm.emissions), spec_(spec), variant_(variant) {
    require_diagonal(hmm, "splice");
    validate_spec(ObservationModelSpec(spec), hmm.dim());
    if (variant_ == SpliceVariant::kPriorModel) {
      if (!spec_.y_prior)
        throw ValidationError("splice: prior_model variant needs p(y|s)");
      // Denominator p(x) = sum_s p(s) N(x; m_y|s + r_s, G_s + C_y|s),
      // collapsed to one Gaussian by moment matching.
      const int d = hmm.dim();
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
      Eigen::VectorXd second = Eigen::VectorXd::Zero(d);
      for (int s = 0; s < spec_.num_regions(); ++s) {
        const Gaussian& yp = (*spec_.y_prior)[s];
        const Eigen::VectorXd ms = yp.mean() + spec_.offsets[s];
        const Eigen::VectorXd vs = yp.diag_var() + spec_.region_var[s];
        mean += spec_.priors[s] * ms;
        second += spec_.priors[s] * (vs + ms.cwiseAbs2());
      }
      prior_mean_ = mean;
      prior_var_ = second - mean.cwiseAbs2();
    }
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    const Gmm& gmm = emissions_.at(req.state);
    const Eigen::VectorXd& weights = ev.region_posterior
                                         ? *ev.region_posterior
                                         : spec_.priors;
    if (weights.size() != spec_.priors.size())
      throw ValidationError("splice: region posterior size mismatch");
    return mix_components(gmm, req.component, [&](int k) {
      const Gaussian& comp = gmm.components[k];
      std::vector<double> terms(spec_.num_regions());
      for (int s = 0; s < spec_.num_regions(); ++s) {
        if (!(weights[s] > 0.0)) {
          terms[s] = kNegInf;
          continue;
        }
        terms[s] = std::log(weights[s]) + region_score(comp, s, ev.observed);
      }
      return log_sum_exp(terms);
    });
  }

 private:
  double region_score(const Gaussian& comp, int s,
                      const Eigen::VectorXd& y) const {
    if (variant_ == SpliceVariant::kConvolution) {
      // N(y; m_x|q - r_s, C_x|q + G_s)
      return convolve(comp, Eigen::VectorXd(-spec_.offsets[s]),
                      spec_.region_var[s])
          .log_pdf(y);
    }
    // Ratio form: p(y|s) int p(x|q) N(x; y + r_s, G_s) / p_hat(x) dx.
    const Gaussian& yp = (*spec_.y_prior)[s];
    double acc = yp.log_pdf(y);
    for (int d = 0; d < comp.dim(); ++d) {
      acc += ratio_overlap_1d(y[d] + spec_.offsets[s][d],
                              std::max(spec_.region_var[s][d], kVarianceFloor),
                              prior_mean_[d], prior_var_[d], comp.mean()[d],
                              comp.diag_var()[d]);
    }
    return acc;
  }

  std::vector<Gmm> emissions_;
  SpliceRegionsModel spec_;
  SpliceVariant variant_;
  Eigen::VectorXd prior_mean_, prior_var_;
};

// --- Joint uncertainty decoding ----------------------------------------------

// Shared by JUD / CMLLR / MLLR so the consistency pairs hold exactly.
Gaussian affine_push(const Gaussian& g, const Eigen::MatrixXd& transform,
                     const Eigen::VectorXd& bias_mean,
                     const Eigen::VectorXd& bias_var, bool adapt_cov) {
  const bool diag_transform = transform.isDiagonal(0.0);
  if (g.is_diagonal() && diag_transform) {
    const Eigen::VectorXd a = transform.diagonal();
    Eigen::VectorXd mean = a.cwiseProduct(g.mean()) + bias_mean;
    Eigen::VectorXd var =
        adapt_cov ? Eigen::VectorXd(a.cwiseAbs2().cwiseProduct(g.diag_var()) + bias_var)
                  : g.diag_var();
    return Gaussian(std::move(mean), std::move(var));
  }
  Eigen::VectorXd mean = transform * g.mean() + bias_mean;
  if (!adapt_cov) {
    if (g.is_diagonal()) return Gaussian(std::move(mean), g.diag_var());
    return Gaussian(std::move(mean), g.full_cov());
  }
  Eigen::MatrixXd cov =
      transform * g.cov_matrix() * transform.transpose();
  cov.diagonal() += bias_var;
  return Gaussian(std::move(mean), std::move(cov));
}

class JudScorer : public EmissionScorer {
 public:
  JudScorer(const Hmm& hmm, const RegressionAssignment& assignment)
      : emissions_(hmm.emissions), assignment_(assignment) {
    assignment_.validate(hmm);
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      const auto& cls = assignment_.classes[assignment_.class_for(req.state, k)];
      return affine_push(gmm.components[k], cls.transform, cls.bias_mean,
                         cls.bias_var, /*adapt_cov=*/true)
          .log_pdf(ev.observed);
    });
  }

 private:
  std::vector<Gmm> emissions_;
  RegressionAssignment assignment_;
};

// --- Ion et al. ---------------------------------------------------------------

class IonScorer : public EmissionScorer {
 public:
  IonScorer(const Hmm& hmm, Gaussian prior)
      : emissions_(hmm.emissions), prior_(std::move(prior)) {
    require_diagonal(hmm, "ion");
    if (!prior_.is_diagonal())
      throw ValidationError("ion: diagonal prior required");
    if (prior_.dim() != hmm.dim())
      throw ValidationError("ion: prior dimension mismatch");
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    if (!ev.posterior)
      throw ValidationError("ion: evidence frame lacks a posterior track");
    // Validate the ratio precision in every dimension up front so the error
    // carries a diagnostic rather than surfacing per component.
    for (int d = 0; d < prior_.dim(); ++d) {
      const double vp = std::max(ev.posterior->var[d], kVarianceFloor);
      if (1.0 / vp - 1.0 / prior_.diag_var()[d] < 0.0)
        throw NumericError(
            "ion: prior sharper than posterior in dimension " +
            std::to_string(d) + " (indefinite ratio precision)");
    }
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      const Gaussian& comp = gmm.components[k];
      double acc = 0.0;
      for (int d = 0; d < comp.dim(); ++d) {
        acc += ratio_overlap_1d(ev.posterior->mean[d],
                                std::max(ev.posterior->var[d], kVarianceFloor),
                                prior_.mean()[d], prior_.diag_var()[d],
                                comp.mean()[d], comp.diag_var()[d]);
      }
      return acc;
    });
  }

 private:
  std::vector<Gmm> emissions_;
  Gaussian prior_;
};

// --- Missing feature -----------------------------------------------------------

class MissingFeatureScorer : public EmissionScorer {
 public:
  MissingFeatureScorer(const Hmm& hmm, MissingFeatureMode mode,
                       std::optional<CleanMarginals> marginals, bool flat)
      : emissions_(hmm.emissions), mode_(mode),
        marginals_(std::move(marginals)), flat_(flat) {
    require_diagonal(hmm, "missing feature");
    if (mode_ == MissingFeatureMode::kMarginalization && !flat_ && !marginals_)
      throw ValidationError(
          "marginalization: clean marginals required (or flat mode)");
    if (marginals_ && (marginals_->mean.size() != hmm.dim() ||
                       marginals_->var.size() != hmm.dim()))
      throw ValidationError("marginalization: marginal dimension mismatch");
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    if (!ev.reliability)
      throw ValidationError("missing feature: evidence frame lacks a mask");
    const auto& rel = *ev.reliability;
    const Gmm& gmm = emissions_.at(req.state);

    if (mode_ == MissingFeatureMode::kImputation) {
      if (!rel.imputed)
        throw ValidationError("imputation: mask without imputed values");
      Eigen::VectorXd subst = ev.observed;
      for (int d = 0; d < ev.dim(); ++d)
        if (!rel.reliable[d]) subst[d] = (*rel.imputed)[d];
      return gmm.log_pdf(subst);
    }

    return mix_components(gmm, req.component, [&](int k) {
      const Gaussian& comp = gmm.components[k];
      double acc = 0.0;
      for (int d = 0; d < comp.dim(); ++d) {
        if (rel.reliable[d]) {
          acc += normal_log_pdf_1d(ev.observed[d], comp.mean()[d],
                                   comp.diag_var()[d]);
        } else if (!flat_) {
          // int p(x^(d)|q) p(x^(d)) dx = N(m_d; mu_kd, v_kd + V_d)
          acc += normal_log_pdf_1d(marginals_->mean[d], comp.mean()[d],
                                   comp.diag_var()[d] + marginals_->var[d]);
        }
      }
      return acc;
    });
  }

 private:
  std::vector<Gmm> emissions_;
  MissingFeatureMode mode_;
  std::optional<CleanMarginals> marginals_;
  bool flat_;
};

// --- Modified imputation ---------------------------------------------------------

class ModifiedImputationScorer : public EmissionScorer {
 public:
  explicit ModifiedImputationScorer(const Hmm& hmm) : emissions_(hmm.emissions) {
    require_diagonal(hmm, "modified imputation");
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    if (!ev.posterior)
      throw ValidationError("modified imputation: evidence frame lacks a posterior track");
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      const Gaussian& comp = gmm.components[k];
      Eigen::VectorXd xhat(comp.dim());
      for (int d = 0; d < comp.dim(); ++d) {
        const double vq = comp.diag_var()[d];
        const double vy = ev.posterior->var[d];
        // argmax of the Gaussian product: precision-weighted mean.
        xhat[d] = (vy == 0.0)
                      ? ev.posterior->mean[d]
                      : (comp.mean()[d] * vy + ev.posterior->mean[d] * vq) /
                            (vq + vy);
      }
      return comp.log_pdf(xhat);
    });
  }

 private:
  std::vector<Gmm> emissions_;
};

// --- Significance decoding ---------------------------------------------------------

class SignificanceScorer : public EmissionScorer {
 public:
  explicit SignificanceScorer(const Hmm& hmm) : emissions_(hmm.emissions) {
    require_diagonal(hmm, "significance");
  }

  LogProb score(const ScoreRequest& req, const FrameEvidence& ev,
                const DecodeContext&) const override {
    if (!ev.posterior)
      throw ValidationError("significance: evidence frame lacks a posterior track");
    const Gaussian post(ev.posterior->mean, ev.posterior->var);
    const Gmm& gmm = emissions_.at(req.state);
    return mix_components(gmm, req.component, [&](int k) {
      // max_x p(x|q) p(x|y) = exp(log_scale) * peak of the normalized product
      const ScaledGaussian prod = product(gmm.components[k], post);
      return prod.log_scale - prod.g.log_normalizer();
    });
  }

 private:
  std::vector<Gmm> emissions_;
};

}  // namespace

int RegressionAssignment::class_for(int state, int component) const {
  if (state < 0 || state >= static_cast<int>(class_of.size()) ||
      component < 0 || component >= static_cast<int>(class_of[state].size()))
    throw ValidationError("regression assignment: unassigned component (state " +
                          std::to_string(state) + ", component " +
                          std::to_string(component) + ")");
  const int k = class_of[state][component];
  if (k < 0 || k >= static_cast<int>(classes.size()))
    throw ValidationError("regression assignment: class index out of range");
  return k;
}

void RegressionAssignment::validate(const Hmm& hmm) const {
  if (classes.empty()) throw ValidationError("regression assignment: no classes");
  const int d = hmm.dim();
  for (const auto& cls : classes) {
    if (cls.transform.rows() != d || cls.transform.cols() != d)
      throw ValidationError("regression assignment: transform must be square DxD");
    if (cls.bias_mean.size() != d || cls.bias_var.size() != d)
      throw ValidationError("regression assignment: bias dimension");
    if (cls.bias_var.minCoeff() < 0.0)
      throw ValidationError("regression assignment: negative bias variance");
  }
  if (static_cast<int>(class_of.size()) != hmm.num_states())
    throw ValidationError("regression assignment: unassigned component (missing state rows)");
  for (int s = 0; s < hmm.num_states(); ++s) {
    if (static_cast<int>(class_of[s].size()) != hmm.emissions[s].num_components())
      throw ValidationError("regression assignment: unassigned component in state " +
                            std::to_string(s));
    for (int k : class_of[s])
      if (k < 0 || k >= static_cast<int>(classes.size()))
        throw ValidationError("regression assignment: class index out of range");
  }
}

RegressionAssignment RegressionAssignment::single_class(const Hmm& hmm,
                                                        RegressionClass cls) {
  RegressionAssignment a;
  a.classes.push_back(std::move(cls));
  a.class_of.resize(hmm.num_states());
  for (int s = 0; s < hmm.num_states(); ++s)
    a.class_of[s].assign(hmm.emissions[s].num_components(), 0);
  return a;
}

std::unique_ptr<EmissionScorer> make_arrowood_scorer(const Hmm& hmm) {
  return std::make_unique<ArrowoodScorer>(hmm);
}

std::unique_ptr<EmissionScorer> make_dvc_scorer(const Hmm& hmm) {
  return std::make_unique<DvcScorer>(hmm);
}

std::unique_ptr<EmissionScorer> make_splice_scorer(const Hmm& hmm,
                                                   const SpliceRegionsModel& spec,
                                                   SpliceVariant variant) {
  return std::make_unique<SpliceScorer>(hmm, spec, variant);
}

std::unique_ptr<EmissionScorer> make_jud_scorer(const Hmm& hmm,
                                                const RegressionAssignment& assignment) {
  return std::make_unique<JudScorer>(hmm, assignment);
}

std::unique_ptr<EmissionScorer> make_ion_scorer(const Hmm& hmm, Gaussian clean_prior) {
  return std::make_unique<IonScorer>(hmm, std::move(clean_prior));
}

std::unique_ptr<EmissionScorer> make_missing_feature_scorer(
    const Hmm& hmm, MissingFeatureMode mode,
    std::optional<CleanMarginals> marginals, bool flat_marginal) {
  return std::make_unique<MissingFeatureScorer>(hmm, mode, std::move(marginals),
                                                flat_marginal);
}

std::unique_ptr<EmissionScorer> make_modified_imputation_scorer(const Hmm& hmm) {
  return std::make_unique<ModifiedImputationScorer>(hmm);
}

std::unique_ptr<EmissionScorer> make_significance_scorer(const Hmm& hmm) {
  return std::make_unique<SignificanceScorer>(hmm);
}

namespace detail {
Gaussian affine_push_for_adapt(const Gaussian& g, const Eigen::MatrixXd& transform,
                               const Eigen::VectorXd& bias_mean,
                               const Eigen::VectorXd& bias_var, bool adapt_cov) {
  return affine_push(g, transform, bias_mean, bias_var, adapt_cov);
}
}  // namespace detail

}  // namespace bnc
