// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include <json.hpp>

#include "qrng/bitstream.hpp"

namespace qrng {

inline constexpr unsigned kMaxBlockBits = 24;

struct MinEntropyReport {
  unsigned block_bits = 8;
  double h_min = 0.0;                     // bits per block, -log2(max_prob)
  std::uint32_t most_probable_block = 0;  // smallest value among ties
  double max_prob = 0.0;
  std::uint64_t max_count = 0;
  std::uint64_t n_blocks = 0;
};

/// Plug-in min-entropy over non-overlapping `block_bits`-wide blocks; a
/// trailing partial block is discarded. The first bit of a block is the most
/// significant bit of its value.
MinEntropyReport min_entropy(const BitStream& stream, unsigned block_bits = 8);

/// Per-bit share of min-entropy, h_min / block_bits.
double extraction_ratio(double h_min, unsigned block_bits);

nlohmann::json to_json(const MinEntropyReport& report);

}  // namespace qrng
