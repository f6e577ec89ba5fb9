#include "bnc/hmm.hpp"

#include <cmath>
#include <limits>

#include "bnc/errors.hpp"

namespace bnc {

namespace {
const double kNegInf = -std::numeric_limits<double>::infinity();
}

void Hmm::validate() const {
  const int s = num_states();
  if (s < 1) throw ValidationError("Hmm: no states");
  if (transitions.rows() != s || transitions.cols() != s)
    throw ValidationError("Hmm: transition matrix shape");
  if (static_cast<int>(emissions.size()) != s)
    throw ValidationError("Hmm: emission count != num states");
  if (std::abs(initial.sum() - 1.0) > 1e-12)
    throw ValidationError("Hmm: initial probabilities sum to " +
                          std::to_string(initial.sum()));
  for (int i = 0; i < s; ++i) {
    if (initial[i] < 0.0) throw ValidationError("Hmm: negative initial prob");
    if (std::abs(transitions.row(i).sum() - 1.0) > 1e-12)
      throw ValidationError("Hmm: transition row " + std::to_string(i) +
                            " sums to " + std::to_string(transitions.row(i).sum()));
    if (transitions.row(i).minCoeff() < 0.0)
      throw ValidationError("Hmm: negative transition prob");
  }
  const int d = emissions.front().dim();
  for (const auto& g : emissions) {
    g.validate();
    if (g.dim() != d) throw ValidationError("Hmm: emission dimension mismatch");
  }
}

void FrameEvidence::validate() const {
  if (posterior && bias)
    throw ValidationError("FrameEvidence: both uncertainty forms present");
  const int d = dim();
  if (posterior && (posterior->mean.size() != d || posterior->var.size() != d))
    throw ValidationError("FrameEvidence: posterior track dimension");
  if (bias && (bias->mean.size() != d || bias->var.size() != d))
    throw ValidationError("FrameEvidence: bias track dimension");
  if (reliability) {
    if (static_cast<int>(reliability->reliable.size()) != d)
      throw ValidationError("FrameEvidence: reliability mask dimension");
    if (reliability->imputed && reliability->imputed->size() != d)
      throw ValidationError("FrameEvidence: imputed vector dimension");
  }
  if (region_posterior && region_posterior->size() == 0)
    throw ValidationError("FrameEvidence: empty region posterior");
}

FrameEvidence FrameEvidence::plain(Eigen::VectorXd y) {
  FrameEvidence e;
  e.observed = std::move(y);
  return e;
}

std::vector<FrameEvidence> to_evidence(const std::vector<Eigen::VectorXd>& frames) {
  std::vector<FrameEvidence> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(FrameEvidence::plain(f));
  return out;
}

ConventionalScorer::ConventionalScorer(const Hmm& hmm) : emissions_(hmm.emissions) {}

LogProb ConventionalScorer::score(const ScoreRequest& req,
                                  const FrameEvidence& evidence,
                                  const DecodeContext&) const {
  const Gmm& gmm = emissions_.at(req.state);
  return mix_components(gmm, req.component, [&](int k) {
    return gmm.components[k].log_pdf(evidence.observed);
  });
}

LogProb mix_components(const Gmm& gmm, const std::optional<int>& component,
                       const std::function<LogProb(int)>& component_score) {
  if (component) return component_score(*component);
  if (gmm.num_components() == 1) return component_score(0);
  std::vector<double> terms(gmm.components.size());
  for (int k = 0; k < gmm.num_components(); ++k) {
    const double w = gmm.weights[k];
    terms[k] = (w > 0.0) ? std::log(w) + component_score(k) : kNegInf;
  }
  return log_sum_exp(terms);
}

}  // namespace bnc
