// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace qrng {

/// Worker cap from QRNG_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

/// Splits [0, n) into at most `workers` contiguous ranges and runs
/// fn(begin, end) for each, concurrently when workers > 1. The first
/// exception thrown by any range is rethrown after all workers join.
void parallel_ranges(std::size_t n, unsigned workers,
                     const std::function<void(std::size_t, std::size_t)>& fn);

inline void parallel_ranges(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  parallel_ranges(n, worker_count(), fn);
}

}  // namespace qrng
