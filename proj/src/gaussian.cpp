#include "bnc/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bnc {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
const double kNegInf = -std::numeric_limits<double>::infinity();

void check_same_dim(int a, int b, const char* what) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": dimension mismatch (" +
                          std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}
}  // namespace

namespace detail {
Eigen::VectorXd floor_variances(Eigen::VectorXd v) {
  for (Eigen::Index d = 0; d < v.size(); ++d) {
    if (!(v[d] >= kVarianceFloor)) {
      if (std::isnan(v[d])) throw NumericError("NaN variance");
      v[d] = kVarianceFloor;
    }
  }
  return v;
}
}  // namespace detail

Gaussian::Gaussian(Eigen::VectorXd mean, Eigen::VectorXd diag_var)
    : mean_(std::move(mean)),
      diag_var_(detail::floor_variances(std::move(diag_var))),
      kind_(CovKind::kDiagonal) {
  check_same_dim(static_cast<int>(mean_.size()),
                 static_cast<int>(diag_var_.size()), "Gaussian");
}

Gaussian::Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), kind_(CovKind::kFull) {
  check_same_dim(static_cast<int>(mean_.size()),
                 static_cast<int>(cov.rows()), "Gaussian");
  check_same_dim(static_cast<int>(cov.rows()), static_cast<int>(cov.cols()),
                 "Gaussian covariance");
  if (!cov.allFinite()) throw NumericError("non-finite covariance");
  // Keep well-conditioned input bit-for-bit; only symmetrize+refloor when an
  // eigenvalue falls below the floor.
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= kVarianceFloor) {
    cov_ = std::move(cov);
  } else {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(kVarianceFloor);
    cov_ = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }
}

const Eigen::VectorXd& Gaussian::diag_var() const {
  if (kind_ != CovKind::kDiagonal)
    throw ValidationError("diag_var() on full-covariance Gaussian");
  return diag_var_;
}

const Eigen::MatrixXd& Gaussian::full_cov() const {
  if (kind_ != CovKind::kFull)
    throw ValidationError("full_cov() on diagonal Gaussian");
  return cov_;
}

Eigen::MatrixXd Gaussian::cov_matrix() const {
  if (kind_ == CovKind::kDiagonal)
    return diag_var_.asDiagonal().toDenseMatrix();
  return cov_;
}

Gaussian Gaussian::as_full() const {
  if (kind_ == CovKind::kFull) return *this;
  return Gaussian(mean_, cov_matrix());
}

double Gaussian::log_normalizer() const {
  if (kind_ == CovKind::kDiagonal) {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < diag_var_.size(); ++d)
      acc += kLog2Pi + std::log(diag_var_[d]);
    return 0.5 * acc;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success)
    throw NumericError("non-PD covariance after flooring");
  double logdet = 0.0;
  for (int d = 0; d < dim(); ++d)
    logdet += std::log(llt.matrixL()(d, d));
  return 0.5 * dim() * kLog2Pi + logdet;
}

LogProb Gaussian::log_pdf(const Eigen::VectorXd& x) const {
  check_same_dim(static_cast<int>(x.size()), dim(), "log_pdf");
  if (kind_ == CovKind::kDiagonal) {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      const double diff = x[d] - mean_[d];
      acc += kLog2Pi + std::log(diag_var_[d]) + diff * diff / diag_var_[d];
    }
    return -0.5 * acc;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success)
    throw NumericError("non-PD covariance after flooring");
  Eigen::VectorXd diff = x - mean_;
  Eigen::VectorXd z = llt.matrixL().solve(diff);
  double logdet = 0.0;
  for (int d = 0; d < dim(); ++d)
    logdet += std::log(llt.matrixL()(d, d));
  return -0.5 * dim() * kLog2Pi - logdet - 0.5 * z.squaredNorm();
}

void Gmm::validate() const {
  if (components.empty()) throw ValidationError("Gmm: no components");
  if (weights.size() != static_cast<Eigen::Index>(components.size()))
    throw ValidationError("Gmm: weight/component count mismatch");
  double sum = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0)) throw ValidationError("Gmm: negative weight");
    sum += weights[k];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ValidationError("Gmm: weights sum to " + std::to_string(sum));
  const int d = components.front().dim();
  const CovKind kind = components.front().kind();
  for (const auto& c : components) {
    if (c.dim() != d) throw ValidationError("Gmm: mixed component dimensions");
    if (c.kind() != kind) throw ValidationError("Gmm: mixed covariance kinds");
  }
}

LogProb Gmm::log_pdf(const Eigen::VectorXd& x) const {
  if (components.size() == 1) return components.front().log_pdf(x);
  std::vector<double> terms(components.size());
  for (size_t k = 0; k < components.size(); ++k) {
    const double w = weights[static_cast<Eigen::Index>(k)];
    terms[k] = (w > 0.0) ? std::log(w) + components[k].log_pdf(x) : kNegInf;
  }
  return log_sum_exp(terms);
}

Gmm Gmm::single(Gaussian g) {
  Gmm m;
  m.weights = Eigen::VectorXd::Ones(1);
  m.components.push_back(std::move(g));
  return m;
}

LogProb log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw ValidationError("log_sum_exp: empty list");
  double m = kNegInf;
  for (double v : values) {
    if (std::isnan(v)) throw NumericError("log_sum_exp: NaN input");
    m = std::max(m, v);
  }
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

LogProb log_sum_exp(std::initializer_list<double> values) {
  return log_sum_exp(std::span<const double>(values.begin(), values.size()));
}

double log_add(double a, double b) {
  return log_sum_exp({a, b});
}

Gaussian convolve(const Gaussian& g, const Gaussian& bias) {
  check_same_dim(g.dim(), bias.dim(), "convolve");
  if (g.is_diagonal() && bias.is_diagonal()) {
    return Gaussian(g.mean() + bias.mean(),
                    Eigen::VectorXd(g.diag_var() + bias.diag_var()));
  }
  return Gaussian(g.mean() + bias.mean(),
                  Eigen::MatrixXd(g.cov_matrix() + bias.cov_matrix()));
}

Gaussian convolve(const Gaussian& g, const Eigen::VectorXd& bias_mean,
                  const Eigen::VectorXd& bias_var) {
  check_same_dim(g.dim(), static_cast<int>(bias_mean.size()), "convolve");
  check_same_dim(g.dim(), static_cast<int>(bias_var.size()), "convolve");
  if (bias_var.minCoeff() < 0.0)
    throw ValidationError("convolve: negative bias variance");
  if (g.is_diagonal()) {
    return Gaussian(g.mean() + bias_mean,
                    Eigen::VectorXd(g.diag_var() + bias_var));
  }
  Eigen::MatrixXd cov = g.full_cov();
  cov.diagonal() += bias_var;
  return Gaussian(g.mean() + bias_mean, std::move(cov));
}

ScaledGaussian product(const Gaussian& a, const Gaussian& b) {
  check_same_dim(a.dim(), b.dim(), "product");
  if (a.is_diagonal() && b.is_diagonal()) {
    const auto& v1 = a.diag_var();
    const auto& v2 = b.diag_var();
    Eigen::VectorXd vsum = v1 + v2;
    for (Eigen::Index d = 0; d < vsum.size(); ++d) {
      if (vsum[d] <= 0.0)
        throw NumericError("product: singular combined precision");
    }
    // Multiplicative forms avoid dividing by a zero variance.
    Eigen::VectorXd mstar =
        (a.mean().cwiseProduct(v2) + b.mean().cwiseProduct(v1)).cwiseQuotient(vsum);
    Eigen::VectorXd vstar = v1.cwiseProduct(v2).cwiseQuotient(vsum);
    const LogProb scale = Gaussian(b.mean(), vsum).log_pdf(a.mean());
    return {scale, Gaussian(std::move(mstar), std::move(vstar))};
  }
  const Eigen::MatrixXd c1 = a.cov_matrix();
  const Eigen::MatrixXd c2 = b.cov_matrix();
  Eigen::LLT<Eigen::MatrixXd> l1(c1), l2(c2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success)
    throw NumericError("product: singular combined precision");
  Eigen::MatrixXd prec = l1.solve(Eigen::MatrixXd::Identity(a.dim(), a.dim())) +
                         l2.solve(Eigen::MatrixXd::Identity(a.dim(), a.dim()));
  Eigen::LLT<Eigen::MatrixXd> lp(prec);
  if (lp.info() != Eigen::Success)
    throw NumericError("product: singular combined precision");
  Eigen::MatrixXd cstar = lp.solve(Eigen::MatrixXd::Identity(a.dim(), a.dim()));
  Eigen::VectorXd mstar = cstar * (l1.solve(a.mean()) + l2.solve(b.mean()));
  const LogProb scale = Gaussian(b.mean(), Eigen::MatrixXd(c1 + c2)).log_pdf(a.mean());
  return {scale, Gaussian(std::move(mstar), std::move(cstar))};
}

}  // namespace bnc
