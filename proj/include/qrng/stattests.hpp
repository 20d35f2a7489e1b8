// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrng/bitstream.hpp"

namespace qrng {

inline constexpr double kDefaultAlpha = 0.01;

struct TestResult {
  std::string test_name;
  double statistic = 0.0;
  double p_value = 0.0;
  bool passed = false;  // p_value >= alpha
  std::size_t n_bits = 0;
};

// Each test throws Error(kTooShort) below its minimum length. Frequency,
// block frequency, runs and cumulative sums need 100 bits, the longest-run
// test 128, approximate entropy and serial 10.

TestResult monobit_frequency(const BitStream& stream, double alpha = kDefaultAlpha);
TestResult block_frequency(const BitStream& stream, std::size_t block_len = 128, double alpha = kDefaultAlpha);
TestResult runs(const BitStream& stream, double alpha = kDefaultAlpha);

/// Block size and class boundaries follow the stream length: M = 8 below
/// 6272 bits, M = 128 below 750000 bits, M = 10000 above.
TestResult longest_run_of_ones(const BitStream& stream, double alpha = kDefaultAlpha);

/// Forward (index 0) and backward (index 1) cumulative-sum excursions.
std::array<TestResult, 2> cumulative_sums(const BitStream& stream, double alpha = kDefaultAlpha);

TestResult approximate_entropy(const BitStream& stream, unsigned m, double alpha = kDefaultAlpha);

/// The two serial statistics, first and second differences of psi^2.
std::array<TestResult, 2> serial(const BitStream& stream, unsigned m, double alpha = kDefaultAlpha);

/// Default pattern lengths for a stream of n bits.
unsigned default_apen_m(std::size_t n);
unsigned default_serial_m(std::size_t n);

struct AutocorrelationPoint {
  std::size_t lag = 0;
  double coefficient = 0.0;
};

/// rho(k) = mean over i < n - k of (b_i - mu)(b_{i+k} - mu), divided by the
/// sample variance. Throws kTooShort if n < 10 * max_lag and
/// kUndefinedVariance for a constant stream.
std::vector<AutocorrelationPoint> autocorrelation(const BitStream& stream, std::size_t max_lag);

struct BatteryOptions {
  double alpha = kDefaultAlpha;
  std::size_t n_subsequences = 100;
  std::size_t block_frequency_len = 128;
  unsigned apen_m = 0;    // 0 = default_apen_m(chunk length)
  unsigned serial_m = 0;  // 0 = default_serial_m(chunk length)
  std::size_t max_lag = 100;
};

/// Aggregate of one test across all sub-sequences.
struct TestSummary {
  std::string test_name;
  TestResult full_stream;
  std::size_t chunks = 0;
  std::size_t chunks_passed = 0;
  double proportion = 0.0;
  double uniformity_p = 1.0;  // chi-square over 10 p-value bins
  bool uniformity_counted = false;
  bool passed = false;
};

struct TestReport {
  double alpha = kDefaultAlpha;
  std::size_t n_bits = 0;
  std::size_t n_subsequences = 0;
  std::size_t chunk_bits = 0;
  double proportion_floor = 0.0;       // lower edge of the binomial band
  std::size_t min_passing_chunks = 0;  // floor(n_subsequences * proportion_floor)
  double proportion_pass = 0.0;        // smallest per-test proportion
  std::vector<TestResult> results;     // full-stream results
  std::vector<TestSummary> summaries;
  std::vector<AutocorrelationPoint> autocorrelation;
  double autocorrelation_band = 0.0;  // 4 / sqrt(n)
  double autocorrelation_max = 0.0;
  bool autocorrelation_passed = false;
  bool passed = false;
};

inline constexpr std::size_t kMinChunkBits = 1000;
inline constexpr double kUniformityThreshold = 1e-4;
inline constexpr std::size_t kMinChunksForUniformity = 55;

/// p_hat - 3 sqrt(p_hat (1 - p_hat) / n) with p_hat = 1 - alpha.
double proportion_floor(double alpha, std::size_t n_sequences);

/// Splits the stream into n_subsequences equal chunks (remainder ignored),
/// runs every test on each chunk and on the whole stream, and computes the
/// autocorrelation of the whole stream. Throws kInsufficientData if a chunk
/// would be shorter than kMinChunkBits.
///
/// A test passes when at least min_passing_chunks chunks pass and, with 55
/// or more chunks, its p-value uniformity stays above 1e-4. The report
/// passes when every test and the autocorrelation band pass.
TestReport run_battery(const BitStream& stream, const BatteryOptions& options = {});

nlohmann::json to_json(const TestResult& result);
nlohmann::json to_json(const TestReport& report);
std::string format_battery_table(const TestReport& report);

/// Writes `stem`.bin (headerless packed bits) and `stem`.txt (ASCII 0/1) for
/// external suites.
void export_for_external_suites(const BitStream& stream, const std::filesystem::path& stem);

}  // namespace qrng
