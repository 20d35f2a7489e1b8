// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "qrng/bitstream.hpp"

namespace qrng {

/// Stateless counter-based generator: value(i) depends only on (seed, i).
///
/// This is SplitMix64 evaluated at an arbitrary position, keyed by a mixed
/// seed so that neighbouring seeds do not produce shifted copies of one
/// another. Random access by index makes chunked parallel generation
/// bit-identical to a serial pass.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : key_(mix(seed ^ 0x6A09E667F3BCC909ULL)) {}

  std::uint64_t bits(std::uint64_t index) const noexcept {
    return mix(key_ + (index + 1) * kGamma);
  }

  /// Top 53 bits of bits(index) as a double in [0, 1).
  double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  /// Integer threshold t such that (bits(i) >> 11) < t  <=>  uniform(i) < p.
  static std::uint64_t threshold(double p) noexcept;

  /// `length` independent fair bits taken 64 at a time from positions
  /// offset, offset + 1, ...
  BitStream random_bits(std::size_t length, std::uint64_t offset = 0) const;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
};

/// Derives an independent sub-seed, e.g. one per sweep point.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return CounterRng::mix(seed + CounterRng::mix(stream + 0x3C6EF372FE94F82BULL));
}

}  // namespace qrng
