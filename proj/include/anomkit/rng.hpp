#pragma once

#include <cstdint>
#include <vector>

namespace anomkit {

/// Reproducible random stream (splitmix64). All distributions are derived
/// from the raw 64-bit output with explicit arithmetic, so a seed yields the
/// same values on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (no cached second value).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; does not advance this generator.
  Rng derive(std::uint64_t salt) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace anomkit
