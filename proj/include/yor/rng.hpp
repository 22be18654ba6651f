#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace yor {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results do not depend on evaluation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
    return mix(mix(seed_ ^ mix(stream + 0x632BE59BD9B4E019ULL)) + counter);
  }
  /// Uniform in (0, 1).
  double uniform(std::uint64_t stream, std::uint64_t counter) const {
    return (static_cast<double>(bits(stream, counter) >> 11) + 0.5) * 0x1.0p-53;
  }
  /// Standard normal via Box-Muller on two derived uniforms.
  double normal(std::uint64_t stream, std::uint64_t counter) const {
    const double u1 = uniform(stream, 2 * counter);
    const double u2 = uniform(stream, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
};

/// Sequential view onto one stream of a CounterRng.
class RngStream {
 public:
  RngStream(CounterRng rng, std::uint64_t stream) : rng_(rng), stream_(stream) {}
  double normal() { return rng_.normal(stream_, counter_++); }
  double uniform() { return rng_.uniform(stream_, counter_++); }
  std::uint64_t counter() const { return counter_; }

 private:
  CounterRng rng_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace yor
