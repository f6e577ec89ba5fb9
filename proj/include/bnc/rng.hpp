#ifndef BNC_RNG_HPP
#define BNC_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string_view>

namespace bnc {

/// Counter-based random stream. A stream is identified by a root seed plus a
/// chain of derivations (by name or index); each (stream, counter) pair maps
/// to one value through a stateless mix, so draws are reproducible regardless
/// of evaluation order. Typical use: seed(utterance).at("x").at(frame).
class SeedStream {
 public:
  explicit SeedStream(uint64_t seed);

  SeedStream at(std::string_view name) const;
  SeedStream at(uint64_t index) const;

  /// Raw 64 mixed bits for the given counter.
  uint64_t bits(uint64_t counter) const;
  /// U(0,1) in the open interval.
  double uniform(uint64_t counter) const;
  /// Standard normal via Box-Muller; one value per counter.
  double normal(uint64_t counter) const;
  /// Vector of independent standard normals, entry d drawn at counter d.
  Eigen::VectorXd normal_vector(int dim) const;
  /// Index drawn from the (unnormalized-tolerant) discrete distribution given
  /// by probs, by CDF inversion at the given counter.
  int categorical(const Eigen::VectorXd& probs, uint64_t counter = 0) const;

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

}  // namespace bnc

#endif  // BNC_RNG_HPP
