#include "conrad/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace conrad {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (Vigna); full-avalanche 64-bit mix.
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(RngState s) {
  // Decorrelate (seed, stream) pairs before use.
  state_ = mix64(mix64(s.seed + kGolden) ^ mix64(s.stream * 0xD6E8FEB86659FD93ull + kGolden));
}

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be positive");
  // Rejection sampling over the largest multiple of bound.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

float Rng::next_float() {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

float Rng::normal() {
  // Box-Muller; u1 nudged away from zero so log stays finite.
  double u1 = next_double();
  double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                            std::cos(2.0 * std::numbers::pi * u2));
}

bool Rng::bernoulli(float p) { return next_float() < p; }

Rng Rng::split(std::uint64_t substream) const {
  Rng child(RngState{0, 0});
  child.state_ = mix64(state_ ^ mix64(substream * 0xA24BAED4963EE407ull + kGolden));
  return child;
}

}  // namespace conrad
