#include "bnc/decode.hpp"

#include <cmath>
#include <limits>

#include "bnc/errors.hpp"

namespace bnc {

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd log_matrix(const Eigen::MatrixXd& m) {
  return m.array().log().matrix();
}

Eigen::VectorXd log_vector(const Eigen::VectorXd& v) {
  return v.array().log().matrix();
}

void check_nonempty(std::span<const FrameEvidence> evidence) {
  if (evidence.empty()) throw ValidationError("decode: empty evidence sequence");
}

void require_no_prev_state(const ScorerNeeds& needs, const char* where) {
  if (needs.prev_state)
    throw ValidationError(std::string(where) + ": scorer requires q_{n-1}; "
                          "use decode_combined_order");
}

void validate_shifts(const std::vector<int>& shifts) {
  for (int s : shifts)
    if (s < 1) throw ValidationError("decode_conditional: shift must be >= 1");
}

// Fills ctx.past with pointers to y_{n-psi_i}; nullptr when out of range.
void fill_past(DecodeContext& ctx, const std::vector<int>& shifts, int n,
               std::span<const FrameEvidence> evidence) {
  ctx.past.resize(shifts.size());
  for (size_t i = 0; i < shifts.size(); ++i) {
    const int m = n - shifts[i];
    ctx.past[i] = (m >= 0) ? &evidence[m].observed : nullptr;
  }
}

// Backtracks the best partial path over frames [0, n] from the delta column
// at frame n. Ties prefer the lower state index.
std::vector<int> backtrack_best(const Eigen::MatrixXd& delta,
                                const Eigen::MatrixXi& psi, int n) {
  int best = 0;
  for (int q = 1; q < delta.rows(); ++q)
    if (delta(q, n) > delta(best, n)) best = q;
  std::vector<int> path(n + 1);
  path[n] = best;
  for (int m = n; m > 0; --m) path[m - 1] = psi(path[m], m);
  return path;
}

// Shared Viterbi body for the standard and conditional decoders; the two
// differ only in which context fields are populated.
DecodeResult viterbi_impl(const Hmm& hmm, const EmissionScorer& scorer,
                          std::span<const FrameEvidence> evidence,
                          std::string kind) {
  check_nonempty(evidence);
  hmm.validate();
  const int S = hmm.num_states();
  const int N = static_cast<int>(evidence.size());
  const ScorerNeeds needs = scorer.needs();
  validate_shifts(needs.past_shifts);

  const Eigen::VectorXd log_init = log_vector(hmm.initial);
  const Eigen::MatrixXd log_trans = log_matrix(hmm.transitions);

  Eigen::MatrixXd delta(S, N);
  Eigen::MatrixXi psi = Eigen::MatrixXi::Zero(S, N);
  Eigen::MatrixXd emit(S, N);

  DecodeContext ctx;
  std::vector<int> partial;
  DecodeResult res;
  res.decoder_kind = std::move(kind);

  for (int n = 0; n < N; ++n) {
    if (!needs.past_shifts.empty()) fill_past(ctx, needs.past_shifts, n, evidence);
    if (needs.partial_path) {
      partial = (n == 0) ? std::vector<int>{} : backtrack_best(delta, psi, n - 1);
      ctx.partial_path = partial;
    }
    double frame_max = kNegInf;
    for (int q = 0; q < S; ++q) {
      ScoreRequest req;
      req.frame = n;
      req.state = q;
      const double e = scorer.score(req, evidence[n], ctx);
      if (std::isnan(e)) throw NumericError("viterbi: NaN emission score");
      emit(q, n) = e;
      frame_max = std::max(frame_max, e);
      if (n == 0) {
        delta(q, 0) = log_init[q] + e;
      } else {
        double best = kNegInf;
        int arg = 0;
        for (int p = 0; p < S; ++p) {
          const double cand = delta(p, n - 1) + log_trans(p, q);
          if (cand > best) {
            best = cand;
            arg = p;
          }
        }
        delta(q, n) = best + e;
        psi(q, n) = arg;
      }
    }
    if (frame_max == kNegInf) res.invalid_frames.push_back(n);
  }

  res.path = backtrack_best(delta, psi, N - 1);
  res.total_log_score = delta(res.path.back(), N - 1);
  res.frame_scores.resize(N);
  for (int n = 0; n < N; ++n) res.frame_scores[n] = emit(res.path[n], n);
  return res;
}

}  // namespace

LogProb forward_log_score(const Hmm& hmm, const EmissionScorer& scorer,
                          std::span<const FrameEvidence> evidence) {
  check_nonempty(evidence);
  hmm.validate();
  const ScorerNeeds needs = scorer.needs();
  require_no_prev_state(needs, "forward_log_score");
  validate_shifts(needs.past_shifts);
  if (needs.partial_path)
    throw ValidationError("forward_log_score: scorer requires a best partial "
                          "path, which the forward recursion does not define");

  const int S = hmm.num_states();
  const int N = static_cast<int>(evidence.size());
  const Eigen::VectorXd log_init = log_vector(hmm.initial);
  const Eigen::MatrixXd log_trans = log_matrix(hmm.transitions);

  Eigen::VectorXd alpha(S), next(S);
  std::vector<double> terms(S);
  DecodeContext ctx;
  for (int n = 0; n < N; ++n) {
    if (!needs.past_shifts.empty()) fill_past(ctx, needs.past_shifts, n, evidence);
    for (int q = 0; q < S; ++q) {
      ScoreRequest req;
      req.frame = n;
      req.state = q;
      const double e = scorer.score(req, evidence[n], ctx);
      if (std::isnan(e)) throw NumericError("forward: NaN emission score");
      if (n == 0) {
        next[q] = log_init[q] + e;
      } else {
        for (int p = 0; p < S; ++p) terms[p] = alpha[p] + log_trans(p, q);
        next[q] = log_sum_exp(terms) + e;
      }
    }
    alpha = next;
  }
  for (int q = 0; q < S; ++q) terms[q] = alpha[q];
  return log_sum_exp(terms);
}

DecodeResult viterbi(const Hmm& hmm, const EmissionScorer& scorer,
                     std::span<const FrameEvidence> evidence) {
  const ScorerNeeds needs = scorer.needs();
  require_no_prev_state(needs, "viterbi");
  if (!needs.past_shifts.empty())
    throw ValidationError("viterbi: scorer requires past observations; "
                          "use decode_conditional");
  return viterbi_impl(hmm, scorer, evidence, "viterbi");
}

DecodeResult decode_conditional(const Hmm& hmm, const EmissionScorer& scorer,
                                std::span<const FrameEvidence> evidence) {
  require_no_prev_state(scorer.needs(), "decode_conditional");
  return viterbi_impl(hmm, scorer, evidence, "conditional");
}

JointDecodeResult viterbi_3d(const Hmm& speech, const Hmm& noise,
                             const JointEmissionScorer& scorer,
                             std::span<const FrameEvidence> evidence) {
  check_nonempty(evidence);
  speech.validate();
  noise.validate();
  const int S = speech.num_states();
  const int T = noise.num_states();
  if (static_cast<long>(S) * T > 100000)
    throw ValidationError("viterbi_3d: product state space exceeds 1e5 states");
  const int J = S * T;
  const int N = static_cast<int>(evidence.size());

  // Product-state machine: j = q * T + qbar, ordered so that the lower-index
  // tie-break prefers lower q first, then lower qbar.
  const Eigen::VectorXd lis = log_vector(speech.initial);
  const Eigen::VectorXd lin = log_vector(noise.initial);
  const Eigen::MatrixXd lts = log_matrix(speech.transitions);
  const Eigen::MatrixXd ltn = log_matrix(noise.transitions);

  Eigen::MatrixXd delta(J, N);
  Eigen::MatrixXi psi = Eigen::MatrixXi::Zero(J, N);
  Eigen::MatrixXd emit(J, N);

  for (int n = 0; n < N; ++n) {
    for (int j = 0; j < J; ++j) {
      const int q = j / T;
      const int qb = j % T;
      const double e = scorer.score(n, q, qb, evidence[n]);
      if (std::isnan(e)) throw NumericError("viterbi_3d: NaN emission score");
      emit(j, n) = e;
      if (n == 0) {
        delta(j, 0) = lis[q] + lin[qb] + e;
      } else {
        double best = kNegInf;
        int arg = 0;
        for (int i = 0; i < J; ++i) {
          const double cand = delta(i, n - 1) + lts(i / T, q) + ltn(i % T, qb);
          if (cand > best) {
            best = cand;
            arg = i;
          }
        }
        delta(j, n) = best + e;
        psi(j, n) = arg;
      }
    }
  }

  const std::vector<int> joint = backtrack_best(delta, psi, N - 1);
  JointDecodeResult res;
  res.total_log_score = delta(joint.back(), N - 1);
  res.speech_path.resize(N);
  res.noise_path.resize(N);
  res.frame_scores.resize(N);
  for (int n = 0; n < N; ++n) {
    res.speech_path[n] = joint[n] / T;
    res.noise_path[n] = joint[n] % T;
    res.frame_scores[n] = emit(joint[n], n);
  }
  return res;
}

DecodeResult decode_combined_order(const Hmm& hmm, const EmissionScorer& scorer,
                                   std::span<const FrameEvidence> evidence) {
  check_nonempty(evidence);
  hmm.validate();
  const ScorerNeeds needs = scorer.needs();
  if (!needs.past_shifts.empty())
    throw ValidationError("decode_combined_order: past-observation scorers "
                          "belong to decode_conditional");

  const int S = hmm.num_states();
  const int N = static_cast<int>(evidence.size());
  const Eigen::VectorXd log_init = log_vector(hmm.initial);
  const Eigen::MatrixXd log_trans = log_matrix(hmm.transitions);

  Eigen::MatrixXd delta(S, N);
  Eigen::MatrixXi psi = Eigen::MatrixXi::Zero(S, N);

  for (int n = 0; n < N; ++n) {
    for (int q = 0; q < S; ++q) {
      if (n == 0) {
        // First frame uses p(y_1 | q_1) only.
        ScoreRequest req;
        req.frame = 0;
        req.state = q;
        const double e = scorer.score(req, evidence[0], DecodeContext{});
        if (std::isnan(e)) throw NumericError("decode_combined_order: NaN score");
        delta(q, 0) = log_init[q] + e;
      } else {
        double best = kNegInf;
        int arg = 0;
        for (int p = 0; p < S; ++p) {
          ScoreRequest req;
          req.frame = n;
          req.state = q;
          req.prev_state = p;
          const double e = scorer.score(req, evidence[n], DecodeContext{});
          if (std::isnan(e)) throw NumericError("decode_combined_order: NaN score");
          const double cand = delta(p, n - 1) + log_trans(p, q) + e;
          if (cand > best) {
            best = cand;
            arg = p;
          }
        }
        delta(q, n) = best;
        psi(q, n) = arg;
      }
    }
  }

  DecodeResult res;
  res.decoder_kind = "combined_order";
  res.path = backtrack_best(delta, psi, N - 1);
  res.total_log_score = delta(res.path.back(), N - 1);
  res.frame_scores.resize(N);
  for (int n = 0; n < N; ++n) {
    ScoreRequest req;
    req.frame = n;
    req.state = res.path[n];
    if (n > 0) req.prev_state = res.path[n - 1];
    res.frame_scores[n] = scorer.score(req, evidence[n], DecodeContext{});
  }
  return res;
}

}  // namespace bnc
