#pragma once

#include <cstdint>
#include <random>

namespace seqcnn {

/// Seeded generator with platform-independent derived distributions.
///
/// Standard-library distributions are implementation-defined, so uniform
/// and normal draws are computed here from the raw 64-bit engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  /// Independent generator for a named sub-stream.
  Rng derive(std::uint64_t stream) const;

 private:
  std::mt19937_64 engine_;
  bool haveSpare_ = false;
  double spare_ = 0.0;
};

}  // namespace seqcnn
