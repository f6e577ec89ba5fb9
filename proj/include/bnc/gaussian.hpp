#ifndef BNC_GAUSSIAN_HPP
#define BNC_GAUSSIAN_HPP

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "bnc/errors.hpp"

namespace bnc {

/// Log-domain probability in nats. -infinity is a legal value (absorbing in
/// log_sum_exp, dominated in max); NaN is never legal.
using LogProb = double;

constexpr double kVarianceFloor = 1e-8;

/// Finite stand-in for log(0) inside log-sum-exp expressions where a term
/// should vanish numerically but an explicit absent flag is not available.
/// exp(-745) underflows to a denormal that is absorbed by any O(1) term.
constexpr double kLogZeroProxy = -745.0;

enum class CovKind { kDiagonal, kFull };

/// Multivariate normal density with diagonal or full covariance.
/// Variances (diagonal entries, or eigenvalues in full mode) are floored at
/// kVarianceFloor on construction; matrices already above the floor are kept
/// bit-for-bit.
class Gaussian {
 public:
  Gaussian() = default;
  Gaussian(Eigen::VectorXd mean, Eigen::VectorXd diag_var);
  Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  int dim() const { return static_cast<int>(mean_.size()); }
  CovKind kind() const { return kind_; }
  bool is_diagonal() const { return kind_ == CovKind::kDiagonal; }

  const Eigen::VectorXd& mean() const { return mean_; }
  /// Diagonal variances; only valid in diagonal mode.
  const Eigen::VectorXd& diag_var() const;
  /// Full covariance matrix; only valid in full mode.
  const Eigen::MatrixXd& full_cov() const;
  /// Covariance as a dense matrix in either mode.
  Eigen::MatrixXd cov_matrix() const;
  Gaussian as_full() const;

  /// log N(x; mean, cov) in nats.
  LogProb log_pdf(const Eigen::VectorXd& x) const;

  /// 0.5 * log det(2 pi C), i.e. the normalizer so that
  /// log_pdf(x) = -normalizer - 0.5 * mahalanobis(x).
  double log_normalizer() const;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd diag_var_;
  Eigen::MatrixXd cov_;
  CovKind kind_ = CovKind::kDiagonal;
};

/// Gaussian mixture; weights sum to 1 within 1e-12, components share kind
/// and dimension.
struct Gmm {
  Eigen::VectorXd weights;
  std::vector<Gaussian> components;

  int dim() const { return components.empty() ? 0 : components.front().dim(); }
  int num_components() const { return static_cast<int>(components.size()); }
  void validate() const;
  LogProb log_pdf(const Eigen::VectorXd& x) const;

  static Gmm single(Gaussian g);
};

/// log sum_i exp(v_i), overflow-safe. All-(-inf) input yields -inf.
/// Throws ValidationError on an empty list.
LogProb log_sum_exp(std::span<const double> values);
LogProb log_sum_exp(std::initializer_list<double> values);

/// log(exp(a) + exp(b)) for two values.
double log_add(double a, double b);

/// Distribution of x + b for independent x ~ g and b ~ bias:
/// N(mean + mean_b, cov + cov_b). Implements the marginalization
/// integral p(y) = int N(x; m, C) N(y; x + m_b, C_b) dx.
Gaussian convolve(const Gaussian& g, const Gaussian& bias);

/// Same with raw diagonal bias stats; a zero bias covariance leaves g
/// unchanged bit-for-bit.
Gaussian convolve(const Gaussian& g, const Eigen::VectorXd& bias_mean,
                  const Eigen::VectorXd& bias_var);

struct ScaledGaussian {
  LogProb log_scale;
  Gaussian g;
};

/// Pointwise product of two Gaussian densities:
///   N(x; m1, C1) N(x; m2, C2) = exp(log_scale) N(x; m*, C*)
/// with C* = (C1^-1 + C2^-1)^-1, m* the precision-weighted mean and
/// log_scale = log N(m1; m2, C1 + C2).
ScaledGaussian product(const Gaussian& a, const Gaussian& b);

namespace detail {
/// Floors v elementwise at kVarianceFloor without disturbing entries that
/// already satisfy it.
Eigen::VectorXd floor_variances(Eigen::VectorXd v);
}  // namespace detail

}  // namespace bnc

#endif  // BNC_GAUSSIAN_HPP
