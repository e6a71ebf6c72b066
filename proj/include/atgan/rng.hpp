#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace atgan {

/// Deterministic random source. The engine is the fully specified
/// std::mt19937_64; all distribution mapping is done here by hand so that
/// sampled sequences are identical across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1), never exactly 0 or 1.
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Two engine draws per sample; no cached
  /// spare, so the stream state is exactly the engine state.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  /// Derives an independent substream seed; does not advance this stream.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace atgan
