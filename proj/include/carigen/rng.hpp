#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace carigen {

/// Deterministic random source. All distributions are pure functions of the
/// raw mt19937_64 stream (no std::*_distribution state), so serializing the
/// engine state captures the full sampler state and draws are reproducible
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1): 53-bit mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; draws two uniforms per call and keeps
  /// no cached spare, so the engine state alone determines the stream.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n) by rejection; n must be positive.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

}  // namespace carigen
