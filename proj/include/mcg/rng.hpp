#pragma once

#include <cstdint>
#include <random>

namespace mcg {

/// Seeded random stream with platform-stable output.
///
/// Bits come from std::mt19937_64, whose sequence is fixed by the standard.
/// The real-valued conversions are done here rather than through
/// std::uniform_real_distribution / std::normal_distribution, whose
/// algorithms differ between standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream derived from (seed, stream) via splitmix64 mixing.
  static Rng derived(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random mantissa bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi). Returns lo when the interval is empty.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (cached second draw).
  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace mcg
