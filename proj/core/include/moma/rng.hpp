#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace moma {

// Deterministic xoshiro256** generator. The standard-library distributions
// are not bit-reproducible across implementations, so every stochastic
// choice in the engine goes through this class. State is four words, which
// makes checkpointing trivial.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  // Derives an independent stream, e.g. Rng(seed, "shuffle", epoch).
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double gaussian();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

// FNV-1a, used to derive named substreams.
std::uint64_t hash64(std::string_view text);

}  // namespace moma
