// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "qrng/apd_sim.hpp"
#include "qrng/calibration.hpp"
#include "qrng/counter_rng.hpp"
#include "qrng/entropy.hpp"
#include "qrng/extractor.hpp"
#include "qrng/parallel.hpp"
#include "qrng/pipeline.hpp"
#include "qrng/stattests.hpp"

namespace qrng {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using Big = boost::multiprecision::cpp_bin_float_50;

// Pinned tolerances and budgets.
constexpr double kCurveRelTol = 1e-12;
constexpr double kCurveBudget = 1.0;
constexpr double kRsqBefore = 0.97;
constexpr double kRsqAfter = 0.999;
constexpr double kParamRelTol = 0.05;
constexpr double kSeedFraction = 0.95;
constexpr double kCalibrationBudget = 30.0;
constexpr double kFairEntropyFloor = 7.5;
constexpr double kEntropyBudget = 5.0;
constexpr double kReportedRate = 8.3e6;
constexpr double kRawRate = 20e6;
constexpr std::size_t kFftInstances = 1000;
constexpr std::size_t kFftMaxL = 4096;
constexpr double kFftBudget = 60.0;
constexpr double kMinThroughput = 20e6;
constexpr std::size_t kQualityPulses = 100'000'000;
constexpr double kMinProportion = 0.96;
constexpr double kQualityBudget = 600.0;
constexpr double kKatTol = 1e-4;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void tunneling_curve() {
  const auto start = Clock::now();
  const CounterRng rng(0xACCE97);
  double worst = 0.0;
  bool monotone = true;
  for (std::uint64_t k = 0; k < 10'000; ++k) {
    const double a = 0.01 + 0.99 * rng.uniform(5 * k);
    const double b = 1e-3 + 5.0 * rng.uniform(5 * k + 1);
    const double v0 = 1.0 + 99.0 * rng.uniform(5 * k + 2);
    const double v = v0 + 1e-3 + 10.0 * rng.uniform(5 * k + 3);
    const double dv = 1e-3 + rng.uniform(5 * k + 4);
    const TunnelingModel model(a, b, v0);
    const Big exact = Big(a) * exp(-Big(b) / (Big(v) - Big(v0)));
    const double want = exact.convert_to<double>();
    worst = std::max(worst, std::abs(model.probability(v) - want) / want);
    monotone = monotone && model.probability(v) <= model.probability(v + dv) &&
               model.probability(v0 - dv) <= model.probability(v);
  }
  const double t = seconds_since(start);
  report(worst <= kCurveRelTol && monotone && t < kCurveBudget, "tunneling-curve",
         fmt("max rel err %.2e (tol %.0e), monotone %s, %.2f s", worst, kCurveRelTol, monotone ? "yes" : "no", t));
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

void calibration() {
  const auto start = Clock::now();
  std::vector<double> volts;
  for (int i = 0; i < 12; ++i) volts.push_back(49.30 + 0.1 * i);
  const TunnelingModel truth = TunnelingModel::reference();
  int within = 0;
  int rsq_ok = 0;
  double worst_before = 0.0;
  double worst_after = 1.0;
  constexpr int kSeeds = 20;
  for (int seed = 0; seed < kSeeds; ++seed) {
    SourceConfig source;
    source.thermal_rate = 0.0;
    source.rng_seed = derive_seed(0x5EE9, static_cast<std::uint64_t>(seed));
    auto points = run_sweep(source, volts, 200'000);
    for (std::size_t i : {2u, 3u, 4u}) points[i].mean += 0.1;
    const auto plain = fit_tunneling_curve(points, false);
    const auto robust = fit_tunneling_curve(points, true);
    worst_before = std::max(worst_before, plain.r_squared);
    worst_after = std::min(worst_after, robust.r_squared);
    rsq_ok += plain.r_squared < kRsqBefore && robust.r_squared > kRsqAfter;
    within += rel(robust.model.amplitude(), truth.amplitude()) <= kParamRelTol &&
              rel(robust.model.steepness(), truth.steepness()) <= kParamRelTol &&
              rel(robust.model.critical_voltage(), truth.critical_voltage()) <= kParamRelTol;
  }
  const double t = seconds_since(start);
  const bool ok = rsq_ok == kSeeds && within >= kSeedFraction * kSeeds && t < kCalibrationBudget;
  report(ok, "calibration-outliers",
         fmt("r2 before <= %.4f, after >= %.5f, r2 ok %d/%d, params within 5%% %d/%d, %.1f s", worst_before,
             worst_after, rsq_ok, kSeeds, within, kSeeds, t));
}

void push_byte(BitStream& s, unsigned v) {
  for (int b = 7; b >= 0; --b) s.push_back((v >> b) & 1u);
}

void min_entropy_fixtures() {
  const auto start = Clock::now();
  BitStream cycle;
  for (int r = 0; r < 4; ++r) {
    for (unsigned v = 0; v < 256; ++v) push_byte(cycle, v);
  }
  BitStream quarter;
  for (unsigned k = 0; k < 100; ++k) {
    push_byte(quarter, 0xA5);
    push_byte(quarter, 3 * k % 256 == 0xA5 ? 1u : 3 * k % 256);
    push_byte(quarter, 7 + k);
    push_byte(quarter, 110 + k % 50);
  }
  const double zero = min_entropy(BitStream(8000), 8).h_min;
  const double two = min_entropy(quarter, 8).h_min;
  const double eight = min_entropy(cycle, 8).h_min;
  const double fair = min_entropy(CounterRng(0xFA1B).random_bits(1'000'000), 8).h_min;
  const double t = seconds_since(start);
  report(zero == 0.0 && two == 2.0 && eight == 8.0 && fair >= kFairEntropyFloor && t < kEntropyBudget,
         "min-entropy", fmt("fixtures %g/%g/%g, fair 1e6 bits %.4f (>= %.1f), %.2f s", zero, two, eight, fair,
                            kFairEntropyFloor, t));
}

void sizing() {
  const std::size_t subtract = compute_output_length(3000, 5.1204, 8, -100);
  const std::size_t literal =
      compute_output_length(3000, 5.1204, 8, -100, {H0Mode::kLog2L, SecuritySign::kAdd});
  const double low = make_rate_report(kRawRate, 3000, subtract).final_rate;
  const double high = make_rate_report(kRawRate, 3000, literal).final_rate;
  report(subtract == 1129 && literal == 1529 && low <= kReportedRate && kReportedRate <= high, "output-sizing",
         fmt("m = %zu / %zu, band [%.3f, %.3f] Mb/s vs 8.3", subtract, literal, low / 1e6, high / 1e6));
}

BitStream per_entry(const BitStream& d, const ExtractorParams& p) {
  const ToeplitzMatrixView t(p);
  BitStream out(p.output_len());
  for (std::size_t j = 0; j < t.cols(); ++j) {
    bool acc = false;
    for (std::size_t i = 0; i < t.rows(); ++i) acc ^= d[i] && t.entry(i, j);
    out.set(j, acc);
  }
  return out;
}

void fft_equivalence() {
  const auto start = Clock::now();
  const ExtractorParams hand(3, 2, 8.0, 8, -1, BitStream::from_string("1011"));
  const BitStream hand_in = BitStream::from_string("110");
  const bool hand_ok = extract_naive(hand_in, hand).to_string() == "11" && per_entry(hand_in, hand).to_string() == "11" &&
                       extract_fft(hand_in, hand).to_string() == "11";
  const CounterRng rng(0xF0F7);
  std::size_t agree = 0;
  std::uint64_t fallbacks = 0;
  for (std::uint64_t k = 0; k < kFftInstances; ++k) {
    const std::size_t l = 2 + rng.bits(3 * k) % (kFftMaxL - 1);
    const std::size_t m = 1 + rng.bits(3 * k + 1) % (l - 1);
    const ToeplitzExtractor ex(ExtractorParams(l, m, 8.0, 8, -1, make_seed(l, m, k)));
    const BitStream d = CounterRng(rng.bits(3 * k + 2)).random_bits(l);
    agree += ex.apply_fft(d) == ex.apply_naive(d);
    fallbacks += ex.fft_fallbacks();
  }
  const double t = seconds_since(start);
  report(hand_ok && agree == kFftInstances && t < kFftBudget, "fft-equals-naive",
         fmt("%zu/%zu instances (l <= %zu), hand example %s, %llu fallbacks, %.1f s", agree, kFftInstances,
             kFftMaxL, hand_ok ? "ok" : "wrong", static_cast<unsigned long long>(fallbacks), t));
}

void throughput() {
  const BitStream input = CounterRng(0x7A9).random_bits(3000 * 40'000);
  const ToeplitzExtractor ex(ExtractorParams(3000, 1129, 5.12, 8, -100, make_seed(3000, 1129, 1)));
  extract_stream(input.slice(0, 3000 * 100), ex);  // warm-up
  const auto start = Clock::now();
  const auto out = extract_stream(input, ex);
  const double t = seconds_since(start);
  const double rate = static_cast<double>(input.size()) / t;
  report(rate >= kMinThroughput && out.chunks == 40'000, "throughput",
         fmt("%.1f Mb/s raw input at l=3000 m=1129 (>= %.0f), %u workers", rate / 1e6, kMinThroughput / 1e6,
             worker_count()));
}

std::string failing_tests(const TestReport& r) {
  std::string names;
  for (const auto& s : r.summaries) {
    if (!s.passed) names += (names.empty() ? "" : ",") + s.test_name;
  }
  if (!r.autocorrelation_passed) names += (names.empty() ? "" : ",") + std::string("autocorrelation");
  return names.empty() ? "none" : names;
}

void quality() {
  const auto start = Clock::now();
  const PipelineConfig config;  // default source carries protect bursts
  const BitStream raw = simulate_pulse_train(config.source, kQualityPulses);
  BatteryOptions opts;
  opts.alpha = 0.01;
  opts.n_subsequences = 100;
  opts.max_lag = 100;
  const TestReport raw_report = run_battery(raw, opts);

  const auto h = min_entropy(raw, 8);
  const std::size_t m = compute_output_length(3000, h.h_min, 8, -100);
  const ToeplitzExtractor ex(ExtractorParams(3000, m, h.h_min, 8, -100, make_seed(3000, m, config.extract.seed_key)));
  const BitStream extracted = extract_stream(raw, ex).output;
  const TestReport ext = run_battery(extracted, opts);

  double min_prop = 1.0;
  bool props_ok = true;
  for (const auto& s : ext.summaries) {
    min_prop = std::min(min_prop, s.proportion);
    props_ok = props_ok && s.proportion >= kMinProportion;
  }
  const double t = seconds_since(start);
  const bool ok = !raw_report.passed && ext.passed && props_ok && ext.autocorrelation_passed && t < kQualityBudget;
  report(ok, "quality-battery",
         fmt("raw fails [%s]; extracted %zu bits h_min %.4f m %zu: %s, min proportion %.2f, max |rho| %.2e < %.2e, "
             "%.0f s",
             failing_tests(raw_report).c_str(), extracted.size(), h.h_min, m, ext.passed ? "all pass" : "FAILS",
             min_prop, ext.autocorrelation_max, ext.autocorrelation_band, t));
}

void known_answers() {
  struct Kat {
    const char* name;
    double got;
    double want;
  };
  const BitStream pi = BitStream::from_string(
      "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000");
  const BitStream lr = BitStream::from_string(
      "11001100000101010110110001001100111000000000001001001101010100010001001111010110"
      "100000001101011111001100111001101101100010110010");
  const BitStream e =
      read_bitstream(std::string(QRNG_TEST_DATA_DIR) + "/e_1e6.bin", Framing::kHeaderless).slice(0, 1'000'000);
  const auto pi_cusum = cumulative_sums(pi);
  const auto small_serial = serial(BitStream::from_string("0011011101"), 3);
  const auto e_cusum = cumulative_sums(e);
  const auto e_serial = serial(e, 2);
  const std::vector<Kat> kats = {
      {"frequency/pi", monobit_frequency(pi).p_value, 0.109599},
      {"block-frequency/pi", block_frequency(pi, 10).p_value, 0.706438},
      {"runs/pi", runs(pi).p_value, 0.500798},
      {"cusum-fwd/pi", pi_cusum[0].p_value, 0.219194},
      {"cusum-rev/pi", pi_cusum[1].p_value, 0.114866},
      {"apen/pi", approximate_entropy(pi, 2).p_value, 0.235301},
      {"longest-run/128", longest_run_of_ones(lr).p_value, 0.180609},
      {"serial-1/10", small_serial[0].p_value, 0.808792},
      {"serial-2/10", small_serial[1].p_value, 0.670320},
      {"apen/10", approximate_entropy(BitStream::from_string("0100110101"), 3).p_value, 0.261961},
      {"frequency/e", monobit_frequency(e).p_value, 0.953749},
      {"block-frequency/e", block_frequency(e, 128).p_value, 0.211072},
      {"cusum-fwd/e", e_cusum[0].p_value, 0.669887},
      {"cusum-rev/e", e_cusum[1].p_value, 0.724266},
      {"runs/e", runs(e).p_value, 0.561917},
      {"longest-run/e", longest_run_of_ones(e).p_value, 0.718945},
      {"apen/e", approximate_entropy(e, 10).p_value, 0.700073},
      {"serial-1/e", e_serial[0].p_value, 0.843764},
      {"serial-2/e", e_serial[1].p_value, 0.561915},
  };
  double worst = 0.0;
  std::string bad;
  for (const auto& k : kats) {
    const double err = std::abs(k.got - k.want);
    worst = std::max(worst, err);
    if (err > kKatTol) bad += std::string(" ") + k.name;
  }
  report(bad.empty(), "known-answer-tests",
         fmt("%zu p-values, max abs err %.1e (tol %.0e)%s", kats.size(), worst, kKatTol, bad.c_str()));
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism() {
  const fs::path root = fs::temp_directory_path() / "qrng_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::vector<std::pair<std::string, std::size_t>>> hashes(2);
  bool ran = true;
  for (int run = 0; run < 2; ++run) {
    PipelineConfig config;
    config.io.output_dir = (root / (run == 0 ? "a" : "b")).string();
    std::ostringstream log;
    try {
      run_pipeline(config, log);
    } catch (const Error& e) {
      ran = false;
      std::printf("  pipeline run %d: %s\n", run, e.what());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(config.io.output_dir)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) hashes[run].emplace_back(f.filename().string(), std::hash<std::string>{}(slurp(f)));
  }
  const bool same = hashes[0] == hashes[1];
  fs::remove_all(root);
  report(ran && same && !hashes[0].empty(), "determinism",
         fmt("%zu artifacts, hashes %s", hashes[0].size(), same ? "identical" : "differ"));
}

}  // namespace
}  // namespace qrng

int main() {
  using namespace qrng;
  try {
    tunneling_curve();
    calibration();
    min_entropy_fixtures();
    sizing();
    fft_equivalence();
    throughput();
    quality();
    known_answers();
    determinism();
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
