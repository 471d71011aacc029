// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace hrt {

/// Counter-based random stream. A key never mutates: `split` derives child
/// keys and `bits(counter)` is a pure function of (key, counter), so masks can
/// be regenerated for backward passes and resumed runs without stored state.
class RngKey {
 public:
  constexpr RngKey() = default;
  constexpr explicit RngKey(std::uint64_t seed) : value_(mix(seed ^ 0x5851F42D4C957F2DULL)) {}

  constexpr std::uint64_t value() const { return value_; }

  constexpr RngKey split(std::uint64_t stream) const {
    RngKey child;
    child.value_ = mix(value_ ^ mix(stream + 0x632BE59BD9B4E019ULL));
    return child;
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix(value_ + (counter + 1) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  friend constexpr bool operator==(RngKey, RngKey) = default;

 private:
  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t value_ = 0;
};

}  // namespace hrt
