#ifndef BNC_TRAIN_HPP
#define BNC_TRAIN_HPP

#include <span>
#include <vector>

#include "bnc/hmm.hpp"

namespace bnc {

/// Clean feature sequence with a fixed per-frame state alignment.
struct LabeledSequence {
  std::vector<Eigen::VectorXd> frames;
  std::vector<int> states;
};

struct TrainOptions {
  int em_iterations = 10;
  double rel_tol = 1e-6;
  /// Start EM from the skeleton's emission parameters instead of the default
  /// alignment-moment initialization.
  bool init_from_topology = false;
};

/// Viterbi-style maximum-likelihood training with fixed alignments:
/// transition rows from alignment counts, per-state GMM emissions by EM.
/// States with no aligned frames keep the skeleton's emission parameters.
/// Diagonal emissions only.
Hmm train_ml(const Hmm& topology, std::span<const LabeledSequence> data,
             const TrainOptions& options = {});

/// Total log-likelihood of the aligned data under the model's emissions
/// (the quantity train_ml's EM does not decrease).
double aligned_emission_log_likelihood(const Hmm& hmm,
                                       std::span<const LabeledSequence> data);

}  // namespace bnc

#endif  // BNC_TRAIN_HPP
