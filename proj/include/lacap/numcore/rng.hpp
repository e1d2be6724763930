#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace lacap::num {

/// Seeded random stream. Only the raw 64-bit engine output (fixed by the
/// standard) is consumed, so draws are identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream) pairs, e.g. one per example.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Draw an index with probability proportional to weights[i].
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace lacap::num
