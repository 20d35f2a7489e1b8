// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace qrng {

unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QRNG_THREADS"); env != nullptr && *env != '\0') {
    try {
      const unsigned long requested = std::stoul(env);
      if (requested > 0) return static_cast<unsigned>(std::min<unsigned long>(requested, 1024));
    } catch (const std::exception&) {
      // Malformed value: fall back to auto.
    }
  }
  return hw;
}

void parallel_ranges(std::size_t n, unsigned workers,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t parts = std::clamp<std::size_t>(workers, 1, n);
  if (parts == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> threads;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  threads.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t begin = n * p / parts;
    const std::size_t end = n * (p + 1) / parts;
    threads.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace qrng
