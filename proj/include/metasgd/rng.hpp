#pragma once

#include <cstdint>

namespace metasgd {

/// Seedable xoshiro256++ generator with SplitMix64 state expansion.
///
/// Every randomized component takes an explicit Rng so runs are a pure
/// function of (config, seed). Independent purposes (parameter init, task
/// sampling, rollouts, evaluation) use independent streams derived from the
/// run seed: stream k expands state from SplitMix64 seeded with
/// `seed ^ (0x9E3779B97F4A7C15 * (k + 1))`.
///
/// Floating-point draws are derived from the raw bits (53-bit mantissa for
/// uniforms, Box-Muller for normals, no caching), so sequences are
/// bit-identical across platforms and standard libraries.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  /// Standard normal via Box-Muller; consumes exactly two uniform draws.
  double normal();

  /// N(0, sd^2) rejection-sampled to |x| <= 2*sd.
  double truncated_normal(double sd);

private:
  std::uint64_t state_[4];
};

}  // namespace metasgd
