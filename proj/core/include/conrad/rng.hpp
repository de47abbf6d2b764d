#pragma once

#include <cstdint>

namespace conrad {

/// Deterministic stream identity: (seed, stream) fully determines every draw.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// Splittable counter-mix generator (SplitMix64 core). One instance per
/// logical stream; split() derives statistically independent child streams
/// without sharing state, so disjoint consumers never contend.
///
/// All conversions are hand-rolled from raw bits, so identical (seed, stream)
/// reproduces identical draws on every platform and compiler.
class Rng {
 public:
  explicit Rng(RngState s);
  Rng(std::uint64_t seed, std::uint64_t stream = 0) : Rng(RngState{seed, stream}) {}

  std::uint64_t next_u64();
  /// Unbiased integer in [0, bound) via rejection; bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);
  /// [0,1) with 24 bits of mantissa.
  float next_float();
  /// [0,1) with 53 bits of mantissa.
  double next_double();
  float uniform(float lo, float hi);
  /// Standard normal via Box-Muller (no cached spare, keeps state trivial).
  float normal();
  bool bernoulli(float p);

  /// Independent child stream; deterministic in (parent identity, substream).
  Rng split(std::uint64_t substream) const;

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_ = 0;
};

}  // namespace conrad
