// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qrng/apd_sim.hpp"
#include "qrng/calibration.hpp"
#include "qrng/entropy.hpp"
#include "qrng/extractor.hpp"
#include "qrng/stattests.hpp"

namespace qrng {

struct SweepConfig {
  std::vector<double> voltages;  // default 49.25 .. 49.50 V in 10 mV steps
  std::size_t pulses_per_point = 100'000;
  bool reject_outliers = true;
  double target_mean = 0.5;

  SweepConfig();
};

struct EntropyConfig {
  unsigned block_bits = 8;
};

struct ExtractConfig {
  std::size_t l = 3000;
  int epsilon_log2 = -100;
  SizingOptions sizing;
  ExtractMethod method = ExtractMethod::kNaive;
  std::string seed_path;  // empty = derive from seed_key
  std::uint64_t seed_key = 0x7E0971D5EEDULL;
};

struct TestsConfig {
  double alpha = kDefaultAlpha;
  std::size_t n_subsequences = 100;
  std::size_t max_lag = 100;
};

struct RatesConfig {
  double raw_rate = 20e6;  // bits/s delivered by the raw link; 0 = pulse_freq
};

struct IoConfig {
  std::string output_dir = "qrng_out";
  bool headerless = false;    // raw and extracted payloads without header
  bool export_ascii = false;  // extra ASCII/headerless copies for external suites
};

struct PipelineConfig {
  SourceConfig source;
  std::size_t n_pulses = 50'000'000;
  SweepConfig sweep;
  EntropyConfig entropy;
  ExtractConfig extract;
  TestsConfig tests;
  RatesConfig rates;
  IoConfig io;

  /// Defaults: 50 MHz trigger, 49.40 V peak on the reference curve,
  /// 500 counts/s thermal noise, weak after-pulsing, 1000-pulse
  /// self-protection bursts every 40000 pulses.
  PipelineConfig();

  /// Throws kInvalidArgument on the first violated constraint.
  void validate() const;
};

/// Reads a config tree; absent keys keep their defaults, unknown keys are
/// rejected.
PipelineConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to the tree. The value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

struct RateReport {
  double raw_rate = 0.0;
  std::size_t l = 0;
  std::size_t m = 0;
  double extraction_ratio = 0.0;  // m / l
  double final_rate = 0.0;        // raw_rate * m / l
};

RateReport make_rate_report(double raw_rate, std::size_t l, std::size_t m);
nlohmann::json to_json(const RateReport& report);

/// Pipeline stage tags used in diagnostics.
enum class Stage { kConfig, kSimulate, kCalibrate, kEntropy, kExtract, kTest, kExport };
std::string_view to_string(Stage stage);

/// An Error raised inside a stage.
class StageError : public Error {
 public:
  StageError(Stage stage, const Error& cause);
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitQuality = 3;

/// 2 for usage, configuration, I/O and format errors; 3 for data-quality
/// failures (fit failure, short or degenerate data).
int exit_code_for(ErrorCode code);

struct PipelineResult {
  double counts_per_second = 0.0;
  TunnelingFit fit;
  double recommended_voltage = 0.0;
  MinEntropyReport entropy;
  std::size_t m = 0;
  StreamExtraction extraction;
  RateReport rate;
  TestReport battery;
  std::vector<std::filesystem::path> artifacts;
};

/// Runs simulate, calibrate, entropy, extract and test, writing every
/// intermediate artifact under config.io.output_dir. Stage failures are
/// rethrown as StageError. The caller decides the exit code from
/// result.battery.passed.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log);

// Individual stages, shared by the CLI subcommands.

/// Detections per simulated second: ones / (n / pulse_freq).
double counting_rate(const BitStream& raw, double pulse_freq);

BitStream load_or_make_seed(const ExtractConfig& config, std::size_t m);

double effective_raw_rate(const PipelineConfig& config);

/// Source used for the calibration sweep: the configured source on its own
/// sub-seed.
SourceConfig sweep_source(const PipelineConfig& config);

}  // namespace qrng
