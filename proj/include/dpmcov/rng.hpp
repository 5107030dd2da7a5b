#pragma once

#include <cstdint>
#include <vector>

#include "dpmcov/types.hpp"

namespace dpmcov {

// Deterministic generator (xoshiro256++) with explicit stream derivation so
// Monte Carlo work can key randomness on (seed, state index, timestep) and
// stay independent of thread count and evaluation order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed, 0, 0); }
  Rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) { reseed(seed, a, b); }

  // Derived stream: same (seed, a, b) always yields the same draw sequence.
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return Rng(seed, a, b);
  }

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // standard normal, Box-Muller
  Vec normal_vec(int d);
  // Index drawn proportionally to the (normalized) weights.
  int categorical(const std::vector<double>& weights);

 private:
  void reseed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace dpmcov
