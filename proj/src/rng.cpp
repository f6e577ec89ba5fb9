#include "bnc/rng.hpp"

#include <cmath>

#include "bnc/errors.hpp"

namespace bnc {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer: full-avalanche 64-bit mix.
uint64_t mix64(uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

SeedStream::SeedStream(uint64_t seed) : state_(mix64(seed)) {}

SeedStream SeedStream::at(std::string_view name) const {
  SeedStream s(0);
  s.state_ = mix64(state_ ^ fnv1a(name));
  return s;
}

SeedStream SeedStream::at(uint64_t index) const {
  SeedStream s(0);
  s.state_ = mix64(state_ + kGolden * (index + 1));
  return s;
}

uint64_t SeedStream::bits(uint64_t counter) const {
  return mix64(state_ ^ (counter * 0xd1342543de82ef95ULL));
}

double SeedStream::uniform(uint64_t counter) const {
  // 53 mantissa bits, shifted into (0,1): never exactly 0 or 1.
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double SeedStream::normal(uint64_t counter) const {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Eigen::VectorXd SeedStream::normal_vector(int dim) const {
  Eigen::VectorXd v(dim);
  for (int d = 0; d < dim; ++d) v[d] = normal(static_cast<uint64_t>(d));
  return v;
}

int SeedStream::categorical(const Eigen::VectorXd& probs, uint64_t counter) const {
  if (probs.size() == 0) throw ValidationError("categorical: empty distribution");
  const double u = uniform(counter) * probs.sum();
  double cdf = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    cdf += probs[k];
    if (u <= cdf) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

}  // namespace bnc
