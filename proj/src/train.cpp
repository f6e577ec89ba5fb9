#include "bnc/train.hpp"

#include <cmath>
#include <limits>

#include "bnc/errors.hpp"

namespace bnc {

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

struct Moments {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

Moments sample_moments(const std::vector<Eigen::VectorXd>& xs) {
  const int d = static_cast<int>(xs.front().size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& x : xs) var += (x - mean).cwiseAbs2();
  var /= static_cast<double>(xs.size());
  return {std::move(mean), std::move(var)};
}

// EM for one state's GMM, initialized either from the aligned data (component
// means spread deterministically along the per-dimension standard deviation)
// or from the skeleton's parameters.
Gmm fit_gmm(const std::vector<Eigen::VectorXd>& xs, const Gmm& skeleton,
            const TrainOptions& opt) {
  const int K = skeleton.num_components();

  Gmm gmm;
  if (opt.init_from_topology) {
    gmm = skeleton;
  } else {
    const Moments mom = sample_moments(xs);
    const Eigen::VectorXd stddev = mom.var.cwiseSqrt();
    gmm.weights = Eigen::VectorXd::Constant(K, 1.0 / K);
    for (int k = 0; k < K; ++k) {
      const double offset = (K == 1) ? 0.0 : (k - 0.5 * (K - 1)) / K;
      gmm.components.emplace_back(Eigen::VectorXd(mom.mean + offset * stddev),
                                  Eigen::VectorXd(mom.var));
    }
  }
  if (opt.em_iterations < 1) return gmm;
  if (K == 1) {
    const Moments mom = sample_moments(xs);
    Gmm single;
    single.weights = Eigen::VectorXd::Ones(1);
    single.components.emplace_back(Eigen::VectorXd(mom.mean),
                                   Eigen::VectorXd(mom.var));
    return single;
  }

  const int D = gmm.dim();
  const int N = static_cast<int>(xs.size());
  Eigen::MatrixXd resp(N, K);
  double prev_ll = kNegInf;
  for (int iter = 0; iter < opt.em_iterations; ++iter) {
    double ll = 0.0;
    for (int n = 0; n < N; ++n) {
      std::vector<double> lp(K);
      for (int k = 0; k < K; ++k)
        lp[k] = (gmm.weights[k] > 0.0)
                    ? std::log(gmm.weights[k]) + gmm.components[k].log_pdf(xs[n])
                    : kNegInf;
      const double norm = log_sum_exp(lp);
      ll += norm;
      for (int k = 0; k < K; ++k)
        resp(n, k) = (norm == kNegInf) ? 1.0 / K : std::exp(lp[k] - norm);
    }
    for (int k = 0; k < K; ++k) {
      const double occ = resp.col(k).sum();
      if (occ <= 0.0) continue;  // keep previous parameters
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
      for (int n = 0; n < N; ++n) mean += resp(n, k) * xs[n];
      mean /= occ;
      Eigen::VectorXd var = Eigen::VectorXd::Zero(D);
      for (int n = 0; n < N; ++n) var += resp(n, k) * (xs[n] - mean).cwiseAbs2();
      var /= occ;
      gmm.components[k] = Gaussian(std::move(mean), std::move(var));
      gmm.weights[k] = occ / N;
    }
    gmm.weights /= gmm.weights.sum();
    if (prev_ll != kNegInf &&
        std::abs(ll - prev_ll) < opt.rel_tol * std::abs(prev_ll))
      break;
    prev_ll = ll;
  }
  return gmm;
}

}  // namespace

Hmm train_ml(const Hmm& topology, std::span<const LabeledSequence> data,
             const TrainOptions& options) {
  topology.validate();
  if (data.empty()) throw ValidationError("train_ml: no training sequences");
  const int S = topology.num_states();
  for (const auto& g : topology.emissions)
    for (const auto& c : g.components)
      if (!c.is_diagonal())
        throw ValidationError("train_ml: diagonal emissions only");

  Eigen::VectorXd init_counts = Eigen::VectorXd::Zero(S);
  Eigen::MatrixXd trans_counts = Eigen::MatrixXd::Zero(S, S);
  std::vector<std::vector<Eigen::VectorXd>> by_state(S);

  for (const auto& seq : data) {
    if (seq.frames.size() != seq.states.size() || seq.frames.empty())
      throw ValidationError("train_ml: malformed labeled sequence");
    init_counts[seq.states.front()] += 1.0;
    for (size_t n = 0; n < seq.frames.size(); ++n) {
      const int s = seq.states[n];
      if (s < 0 || s >= S) throw ValidationError("train_ml: state label out of range");
      by_state[s].push_back(seq.frames[n]);
      if (n > 0) trans_counts(seq.states[n - 1], s) += 1.0;
    }
  }

  Hmm out = topology;
  out.initial = init_counts / init_counts.sum();
  for (int i = 0; i < S; ++i) {
    const double row = trans_counts.row(i).sum();
    if (row > 0.0)
      out.transitions.row(i) = trans_counts.row(i) / row;
    // else: state never left in the data; keep the skeleton row.
  }
  for (int s = 0; s < S; ++s) {
    if (by_state[s].empty()) continue;  // empty occupancy: keep prior params
    out.emissions[s] = fit_gmm(by_state[s], topology.emissions[s], options);
  }
  out.validate();
  return out;
}

double aligned_emission_log_likelihood(const Hmm& hmm,
                                       std::span<const LabeledSequence> data) {
  double ll = 0.0;
  for (const auto& seq : data)
    for (size_t n = 0; n < seq.frames.size(); ++n)
      ll += hmm.emissions[seq.states[n]].log_pdf(seq.frames[n]);
  return ll;
}

}  // namespace bnc
