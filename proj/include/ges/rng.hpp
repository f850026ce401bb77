#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ges {

/// Counter-based SplitMix64. Output depends only on (seed, counter), so a run
/// is reproducible bit-for-bit on any platform with IEEE doubles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * double(n)); }

  /// Standard normal by Box-Muller (one draw per call, two uniforms consumed).
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  /// Index drawn from an unnormalized non-negative weight row.
  template <typename Row>
  long categorical(const Row& w) {
    double total = 0.0;
    for (long i = 0; i < static_cast<long>(w.size()); ++i) total += static_cast<double>(w[i]);
    double u = uniform() * total;
    long last = 0;
    for (long i = 0; i < static_cast<long>(w.size()); ++i) {
      const double wi = static_cast<double>(w[i]);
      if (wi <= 0.0) continue;
      last = i;
      if (u < wi) return i;
      u -= wi;
    }
    return last;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace ges
