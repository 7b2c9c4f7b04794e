#pragma once

#include <cstdint>
#include <random>

namespace nw {

/// SplitMix64 finalizer; used to decorrelate seeds.
std::uint64_t mix64(std::uint64_t x);

/// Random stream used by all samplers.
///
/// Uniforms are built from the top 53 bits of a Mersenne Twister draw so the
/// sequence is identical across standard library implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Child stream keyed by (master seed, index). The child does not depend on
  /// how many other children exist or in which order they are created.
  static RandomStream child(std::uint64_t master_seed, std::uint64_t index);

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Equiprobable +1 / -1.
  int sign() { return (engine_() >> 63) != 0 ? 1 : -1; }

  /// Exponential variate with the given rate (> 0).
  double exponential(double rate);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nw
