// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/counter_rng.hpp"

#include <cmath>
#include <vector>

namespace qrng {

std::uint64_t CounterRng::threshold(double p) noexcept {
  if (!(p > 0.0)) return 0;
  if (p >= 1.0) return std::uint64_t{1} << 53;
  // p * 2^53 is exact; ceil makes the integer comparison match u < p.
  return static_cast<std::uint64_t>(std::ceil(std::ldexp(p, 53)));
}

BitStream CounterRng::random_bits(std::size_t length, std::uint64_t offset) const {
  std::vector<std::uint64_t> words(BitStream::words_for(length));
  for (std::size_t w = 0; w < words.size(); ++w) words[w] = bits(offset + w);
  return BitStream::from_words(std::move(words), length);
}

}  // namespace qrng
