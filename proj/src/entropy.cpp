// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "qrng/error.hpp"
#include "qrng/parallel.hpp"

namespace qrng {

namespace {

using Histogram = std::vector<std::uint64_t>;

void count_bytes(const BitStream& stream, std::uint64_t begin, std::uint64_t end, Histogram& hist) {
  const auto words = stream.words();
  for (std::uint64_t b = begin; b < end; ++b) {
    ++hist[(words[b / 8] >> (56 - 8 * (b % 8))) & 0xFF];
  }
}

void count_blocks(const BitStream& stream, unsigned width, std::uint64_t begin, std::uint64_t end,
                  Histogram& hist) {
  for (std::uint64_t b = begin; b < end; ++b) ++hist[stream.read_bits(b * width, width)];
}

}  // namespace

MinEntropyReport min_entropy(const BitStream& stream, unsigned block_bits) {
  require(block_bits >= 1 && block_bits <= kMaxBlockBits, ErrorCode::kInvalidArgument,
          "block_bits must lie in [1, " + std::to_string(kMaxBlockBits) + "]");
  require(!stream.empty() && stream.size() >= block_bits, ErrorCode::kInvalidArgument,
          "stream shorter than one block");

  const std::uint64_t n_blocks = stream.size() / block_bits;
  const std::size_t table = std::size_t{1} << block_bits;

  // Histograms are merged per worker, so the result does not depend on the split.
  const unsigned workers = static_cast<unsigned>(std::min<std::uint64_t>(worker_count(), 1 + n_blocks / 65536));
  std::vector<Histogram> partial(workers, Histogram(table, 0));
  parallel_ranges(workers, workers, [&](std::size_t first, std::size_t last) {
    for (std::size_t w = first; w < last; ++w) {
      const std::uint64_t begin = n_blocks * w / workers;
      const std::uint64_t end = n_blocks * (w + 1) / workers;
      if (block_bits == 8) {
        count_bytes(stream, begin, end, partial[w]);
      } else {
        count_blocks(stream, block_bits, begin, end, partial[w]);
      }
    }
  });
  Histogram hist(table, 0);
  for (const auto& h : partial) {
    for (std::size_t v = 0; v < table; ++v) hist[v] += h[v];
  }

  const auto it = std::max_element(hist.begin(), hist.end());
  MinEntropyReport report;
  report.block_bits = block_bits;
  report.n_blocks = n_blocks;
  report.max_count = *it;
  report.most_probable_block = static_cast<std::uint32_t>(it - hist.begin());
  report.max_prob = static_cast<double>(report.max_count) / static_cast<double>(n_blocks);
  report.h_min = report.max_count == n_blocks ? 0.0 : -std::log2(report.max_prob);
  return report;
}

double extraction_ratio(double h_min, unsigned block_bits) {
  require(block_bits >= 1, ErrorCode::kInvalidArgument, "block_bits must be positive");
  require(h_min >= 0.0 && h_min <= static_cast<double>(block_bits), ErrorCode::kInvalidArgument,
          "h_min must lie in [0, block_bits]");
  return h_min / static_cast<double>(block_bits);
}

nlohmann::json to_json(const MinEntropyReport& report) {
  char hex[16];
  std::snprintf(hex, sizeof hex, "0x%0*X", static_cast<int>((report.block_bits + 3) / 4),
                report.most_probable_block);
  return nlohmann::json{
      {"block_bits", report.block_bits},
      {"h_min", report.h_min},
      {"max_prob", report.max_prob},
      {"most_probable_block", hex},
      {"n_blocks", report.n_blocks},
  };
}

}  // namespace qrng
