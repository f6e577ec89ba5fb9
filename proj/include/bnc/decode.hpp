#ifndef BNC_DECODE_HPP
#define BNC_DECODE_HPP

#include <span>

#include "bnc/hmm.hpp"

namespace bnc {

/// log p(y_{1:N} | model) by the forward recursion in log domain.
/// The scorer must not depend on q_{n-1}, past observations, or decoder
/// context.
LogProb forward_log_score(const Hmm& hmm, const EmissionScorer& scorer,
                          std::span<const FrameEvidence> evidence);

/// Max-approximation of the acoustic score; ties broken toward the lower
/// state index. Publishes the best partial path to scorers that declare
/// partial_path.
DecodeResult viterbi(const Hmm& hmm, const EmissionScorer& scorer,
                     std::span<const FrameEvidence> evidence);

struct JointDecodeResult {
  std::vector<int> speech_path;
  std::vector<int> noise_path;
  LogProb total_log_score = 0.0;
  std::vector<LogProb> frame_scores;
};

/// Joint Viterbi over the speech/noise product state space
/// max over (q, q-bar) paths of prod p(y|q,qbar) p(q|q') p(qbar|qbar').
/// Refuses product spaces above 1e5 states.
JointDecodeResult viterbi_3d(const Hmm& speech, const Hmm& noise,
                             const JointEmissionScorer& scorer,
                             std::span<const FrameEvidence> evidence);

/// Viterbi for autoregressive emissions p(y_n | y_{n-psi_1}, ..., q_n).
/// The scorer's declared past_shifts select which past observations are
/// handed over; shifts reaching before the first frame are passed as absent.
DecodeResult decode_conditional(const Hmm& hmm, const EmissionScorer& scorer,
                                std::span<const FrameEvidence> evidence);

/// Viterbi for combined-order emissions p(y_n | q_n, q_{n-1}); the first
/// frame uses p(y_1 | q_1) only.
DecodeResult decode_combined_order(const Hmm& hmm, const EmissionScorer& scorer,
                                   std::span<const FrameEvidence> evidence);

}  // namespace bnc

#endif  // BNC_DECODE_HPP
