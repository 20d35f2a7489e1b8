// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/stattests.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "qrng/error.hpp"
#include "qrng/parallel.hpp"
#include "text_util.hpp"

namespace qrng {

namespace {

constexpr std::size_t kMinBits = 100;
constexpr std::size_t kMinPatternBits = 10;
constexpr unsigned kMaxPattern = 20;

// Regularized upper incomplete gamma Q(a, x).
double igamc(double a, double x) {
  if (!(x > 0.0)) return 1.0;
  return boost::math::gamma_q(a, x);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

void require_length(const BitStream& s, std::size_t min_bits, const char* test) {
  require(s.size() >= min_bits, ErrorCode::kTooShort,
          std::string(test) + " needs at least " + std::to_string(min_bits) + " bits, got " +
              std::to_string(s.size()));
}

TestResult make_result(std::string name, double statistic, double p, double alpha, std::size_t n) {
  p = clamp_p(p);
  return TestResult{std::move(name), statistic, p, p >= alpha, n};
}

// Word w of the stream shifted left by `shift` bits (zero past the end).
std::uint64_t shifted_word(std::span<const std::uint64_t> words, std::size_t w, std::size_t shift) {
  const std::size_t q = w + shift / 64;
  const unsigned s = static_cast<unsigned>(shift % 64);
  const std::uint64_t hi = q < words.size() ? words[q] : 0;
  if (s == 0) return hi;
  const std::uint64_t lo = q + 1 < words.size() ? words[q + 1] : 0;
  return (hi << s) | (lo >> (64 - s));
}

// Overlapping m-bit pattern counts with the stream wrapped around, indexed
// by pattern value (first bit most significant).
std::vector<std::uint64_t> cyclic_counts(const BitStream& s, unsigned m) {
  std::vector<std::uint64_t> counts(std::size_t{1} << m, 0);
  const std::size_t n = s.size();
  const std::uint64_t mask = (std::uint64_t{1} << m) - 1;
  std::uint64_t window = 0;
  for (unsigned i = 0; i + 1 < m; ++i) window = (window << 1) | s[i % n];
  for (std::size_t i = m - 1; i < n + m - 1; ++i) {
    window = ((window << 1) | s[i < n ? i : i - n]) & mask;
    ++counts[window];
  }
  return counts;
}

// Counts for pattern length k - 1 from those for length k.
std::vector<std::uint64_t> marginalize(const std::vector<std::uint64_t>& counts) {
  std::vector<std::uint64_t> out(counts.size() / 2);
  for (std::size_t u = 0; u < out.size(); ++u) out[u] = counts[2 * u] + counts[2 * u + 1];
  return out;
}

double phi(const std::vector<std::uint64_t>& counts, std::size_t n) {
  double sum = 0.0;
  for (const auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(n);
    sum += p * std::log(p);
  }
  return sum;
}

double psi_squared(const std::vector<std::uint64_t>& counts, std::size_t n) {
  double sum = 0.0;
  for (const auto c : counts) sum += static_cast<double>(c) * static_cast<double>(c);
  return sum * static_cast<double>(counts.size()) / static_cast<double>(n) - static_cast<double>(n);
}

std::size_t longest_run_in(const BitStream& s, std::size_t begin, std::size_t end) {
  std::size_t best = 0;
  std::size_t run = 0;
  for (std::size_t i = begin; i < end; ++i) {
    run = s[i] ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

}  // namespace

TestResult monobit_frequency(const BitStream& stream, double alpha) {
  require_length(stream, kMinBits, "Frequency");
  const double n = static_cast<double>(stream.size());
  const double sum = 2.0 * static_cast<double>(stream.count_ones()) - n;
  const double s_obs = std::abs(sum) / std::sqrt(n);
  return make_result("Frequency", s_obs, std::erfc(s_obs / std::numbers::sqrt2), alpha, stream.size());
}

TestResult block_frequency(const BitStream& stream, std::size_t block_len, double alpha) {
  require_length(stream, kMinBits, "BlockFrequency");
  require(block_len >= 1 && block_len <= stream.size(), ErrorCode::kInvalidArgument,
          "BlockFrequency block length must lie in [1, n]");
  const std::size_t blocks = stream.size() / block_len;
  const double m = static_cast<double>(block_len);
  double chi2 = 0.0;
  for (std::size_t b = 0; b < blocks; ++b) {
    const double pi = static_cast<double>(stream.count_ones(b * block_len, block_len)) / m;
    chi2 += (pi - 0.5) * (pi - 0.5);
  }
  chi2 *= 4.0 * m;
  return make_result("BlockFrequency", chi2, igamc(static_cast<double>(blocks) / 2.0, chi2 / 2.0), alpha,
                     stream.size());
}

TestResult runs(const BitStream& stream, double alpha) {
  require_length(stream, kMinBits, "Runs");
  const std::size_t n = stream.size();
  const double nd = static_cast<double>(n);
  const double pi = static_cast<double>(stream.count_ones()) / nd;
  // Frequency prerequisite; the test is not applicable to a biased stream.
  if (std::abs(pi - 0.5) >= 2.0 / std::sqrt(nd)) return make_result("Runs", 0.0, 0.0, alpha, n);

  // Transitions b_i != b_{i+1} for i < n - 1.
  const auto words = stream.words();
  std::size_t transitions = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::uint64_t diff = words[w] ^ shifted_word(words, w, 1);
    const std::size_t first = w * 64;
    if (first + 64 > n - 1) {
      const std::size_t valid = n - 1 > first ? n - 1 - first : 0;
      diff &= valid == 0 ? 0 : ~std::uint64_t{0} << (64 - valid);
    }
    transitions += static_cast<std::size_t>(std::popcount(diff));
  }
  const double v_obs = static_cast<double>(transitions) + 1.0;
  const double q = pi * (1.0 - pi);
  const double p = std::erfc(std::abs(v_obs - 2.0 * nd * q) / (2.0 * std::sqrt(2.0 * nd) * q));
  return make_result("Runs", v_obs, p, alpha, n);
}

TestResult longest_run_of_ones(const BitStream& stream, double alpha) {
  require_length(stream, 128, "LongestRun");
  const std::size_t n = stream.size();
  std::size_t block;
  std::size_t lowest;
  std::vector<double> pi;
  if (n < 6272) {
    block = 8;
    lowest = 1;
    pi = {0.21484375, 0.3671875, 0.23046875, 0.1875};
  } else if (n < 750000) {
    block = 128;
    lowest = 4;
    pi = {0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847};
  } else {
    block = 10000;
    lowest = 10;
    pi = {0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727};
  }
  const std::size_t classes = pi.size();
  const std::size_t blocks = n / block;
  std::vector<std::size_t> nu(classes, 0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t run = longest_run_in(stream, b * block, (b + 1) * block);
    const std::size_t cls = std::min(run > lowest ? run - lowest : 0, classes - 1);
    ++nu[cls];
  }
  const double nb = static_cast<double>(blocks);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < classes; ++i) {
    const double expected = nb * pi[i];
    chi2 += (static_cast<double>(nu[i]) - expected) * (static_cast<double>(nu[i]) - expected) / expected;
  }
  return make_result("LongestRun", chi2, igamc(static_cast<double>(classes - 1) / 2.0, chi2 / 2.0), alpha, n);
}

std::array<TestResult, 2> cumulative_sums(const BitStream& stream, double alpha) {
  require_length(stream, kMinBits, "CumulativeSums");
  const std::size_t n = stream.size();
  const double nd = static_cast<double>(n);
  long long sum = 0;
  long long max_fwd = 0;
  long long lo = 0;
  long long hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += stream[i] ? 1 : -1;
    max_fwd = std::max(max_fwd, sum < 0 ? -sum : sum);
    lo = std::min(lo, sum);
    hi = std::max(hi, sum);
  }
  // Partial sums from the end are total - S_k, k = n-1 .. 0 (S_0 = 0).
  const long long max_rev = std::max(std::abs(sum - lo), std::abs(sum - hi));

  auto p_value = [&](double z) {
    const double root_n = std::sqrt(nd);
    double sum1 = 0.0;
    for (auto k = static_cast<long long>(std::floor((-nd / z + 1.0) / 4.0));
         k <= static_cast<long long>(std::floor((nd / z - 1.0) / 4.0)); ++k) {
      const double kd = static_cast<double>(k);
      sum1 += normal_cdf((4.0 * kd + 1.0) * z / root_n) - normal_cdf((4.0 * kd - 1.0) * z / root_n);
    }
    double sum2 = 0.0;
    for (auto k = static_cast<long long>(std::floor((-nd / z - 3.0) / 4.0));
         k <= static_cast<long long>(std::floor((nd / z - 1.0) / 4.0)); ++k) {
      const double kd = static_cast<double>(k);
      sum2 += normal_cdf((4.0 * kd + 3.0) * z / root_n) - normal_cdf((4.0 * kd + 1.0) * z / root_n);
    }
    return 1.0 - sum1 + sum2;
  };
  const auto z_fwd = static_cast<double>(max_fwd);
  const auto z_rev = static_cast<double>(max_rev);
  return {make_result("CumulativeSums-forward", z_fwd, p_value(z_fwd), alpha, n),
          make_result("CumulativeSums-reverse", z_rev, p_value(z_rev), alpha, n)};
}

TestResult approximate_entropy(const BitStream& stream, unsigned m, double alpha) {
  require_length(stream, kMinPatternBits, "ApproximateEntropy");
  require(m >= 1 && m + 1 <= kMaxPattern, ErrorCode::kInvalidArgument,
          "ApproximateEntropy block length must lie in [1, " + std::to_string(kMaxPattern - 1) + "]");
  const std::size_t n = stream.size();
  const auto upper = cyclic_counts(stream, m + 1);
  const auto lower = marginalize(upper);
  const double apen = phi(lower, n) - phi(upper, n);
  const double chi2 = 2.0 * static_cast<double>(n) * (std::numbers::ln2 - apen);
  const double p = igamc(std::ldexp(1.0, static_cast<int>(m) - 1), chi2 / 2.0);
  return make_result("ApproximateEntropy", chi2, p, alpha, n);
}

std::array<TestResult, 2> serial(const BitStream& stream, unsigned m, double alpha) {
  require_length(stream, kMinPatternBits, "Serial");
  require(m >= 2 && m <= kMaxPattern, ErrorCode::kInvalidArgument,
          "Serial block length must lie in [2, " + std::to_string(kMaxPattern) + "]");
  const std::size_t n = stream.size();
  const auto c0 = cyclic_counts(stream, m);
  const auto c1 = marginalize(c0);
  const double psi_m = psi_squared(c0, n);
  const double psi_m1 = psi_squared(c1, n);
  const double psi_m2 = m >= 3 ? psi_squared(marginalize(c1), n) : 0.0;
  const double del1 = psi_m - psi_m1;
  const double del2 = psi_m - 2.0 * psi_m1 + psi_m2;
  const int mi = static_cast<int>(m);
  return {make_result("Serial-1", del1, igamc(std::ldexp(1.0, mi - 2), del1 / 2.0), alpha, n),
          make_result("Serial-2", del2, igamc(std::ldexp(1.0, mi - 3), del2 / 2.0), alpha, n)};
}

unsigned default_apen_m(std::size_t n) {
  const int log2n = n > 0 ? static_cast<int>(std::bit_width(n)) - 1 : 0;
  return static_cast<unsigned>(std::clamp(log2n - 6, 1, 10));
}

unsigned default_serial_m(std::size_t n) {
  const int log2n = n > 0 ? static_cast<int>(std::bit_width(n)) - 1 : 0;
  return static_cast<unsigned>(std::clamp(log2n - 3, 2, 16));
}

std::vector<AutocorrelationPoint> autocorrelation(const BitStream& stream, std::size_t max_lag) {
  require(max_lag >= 1, ErrorCode::kInvalidArgument, "max_lag must be positive");
  require(stream.size() >= 10 * max_lag, ErrorCode::kTooShort,
          "autocorrelation up to lag " + std::to_string(max_lag) + " needs at least " +
              std::to_string(10 * max_lag) + " bits");
  const std::size_t n = stream.size();
  const double ones = static_cast<double>(stream.count_ones());
  const double mu = ones / static_cast<double>(n);
  const double variance = mu * (1.0 - mu);
  require(variance > 0.0, ErrorCode::kUndefinedVariance, "autocorrelation of a constant stream is undefined");

  const auto words = stream.words();
  std::vector<AutocorrelationPoint> out(max_lag);
  parallel_ranges(max_lag, [&](std::size_t first, std::size_t last) {
    for (std::size_t idx = first; idx < last; ++idx) {
      const std::size_t k = idx + 1;
      // Pairs (i, i + k) with both bits set; padding zeros end the sum at n - k.
      std::uint64_t both = 0;
      for (std::size_t w = 0; w < words.size(); ++w) {
        both += static_cast<std::uint64_t>(std::popcount(words[w] & shifted_word(words, w, k)));
      }
      const double head = static_cast<double>(stream.count_ones(0, n - k));
      const double tail = static_cast<double>(stream.count_ones(k, n - k));
      const double pairs = static_cast<double>(n - k);
      const double cov = (static_cast<double>(both) - mu * (head + tail)) / pairs + mu * mu;
      out[idx] = {k, std::clamp(cov / variance, -1.0, 1.0)};
    }
  });
  return out;
}

double proportion_floor(double alpha, std::size_t n_sequences) {
  require(n_sequences > 0, ErrorCode::kInvalidArgument, "proportion band needs at least one sequence");
  const double p_hat = 1.0 - alpha;
  return p_hat - 3.0 * std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n_sequences));
}

namespace {

struct BatteryParams {
  double alpha;
  std::size_t block_len;
  unsigned apen_m;
  unsigned serial_m;
};

std::vector<TestResult> run_all(const BitStream& s, const BatteryParams& p) {
  std::vector<TestResult> out;
  out.reserve(9);
  out.push_back(monobit_frequency(s, p.alpha));
  out.push_back(block_frequency(s, p.block_len, p.alpha));
  for (auto& r : cumulative_sums(s, p.alpha)) out.push_back(std::move(r));
  out.push_back(runs(s, p.alpha));
  out.push_back(longest_run_of_ones(s, p.alpha));
  out.push_back(approximate_entropy(s, p.apen_m, p.alpha));
  for (auto& r : serial(s, p.serial_m, p.alpha)) out.push_back(std::move(r));
  return out;
}

double uniformity(const std::vector<double>& p_values) {
  std::array<double, 10> bins{};
  for (const double p : p_values) bins[std::min<std::size_t>(9, static_cast<std::size_t>(p * 10.0))] += 1.0;
  const double expected = static_cast<double>(p_values.size()) / 10.0;
  double chi2 = 0.0;
  for (const double f : bins) chi2 += (f - expected) * (f - expected) / expected;
  return igamc(4.5, chi2 / 2.0);
}

}  // namespace

TestReport run_battery(const BitStream& stream, const BatteryOptions& options) {
  require(options.alpha > 0.0 && options.alpha < 1.0, ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  require(options.n_subsequences >= 1, ErrorCode::kInvalidArgument, "n_subsequences must be positive");
  const std::size_t chunk = stream.size() / options.n_subsequences;
  require(chunk >= kMinChunkBits, ErrorCode::kInsufficientData,
          "stream of " + std::to_string(stream.size()) + " bits gives " + std::to_string(options.n_subsequences) +
              " chunks of " + std::to_string(chunk) + " bits; at least " + std::to_string(kMinChunkBits) +
              " bits per chunk are required");
  require(options.block_frequency_len <= chunk, ErrorCode::kInvalidArgument,
          "block frequency length exceeds the chunk length");

  TestReport report;
  report.alpha = options.alpha;
  report.n_bits = stream.size();
  report.n_subsequences = options.n_subsequences;
  report.chunk_bits = chunk;
  report.proportion_floor = proportion_floor(options.alpha, options.n_subsequences);
  report.min_passing_chunks = static_cast<std::size_t>(
      std::floor(report.proportion_floor * static_cast<double>(options.n_subsequences)));

  const BatteryParams chunk_params{options.alpha, options.block_frequency_len,
                                   options.apen_m ? options.apen_m : default_apen_m(chunk),
                                   options.serial_m ? options.serial_m : default_serial_m(chunk)};
  std::vector<std::vector<TestResult>> per_chunk(options.n_subsequences);
  parallel_ranges(options.n_subsequences, [&](std::size_t first, std::size_t last) {
    for (std::size_t c = first; c < last; ++c) per_chunk[c] = run_all(stream.slice(c * chunk, chunk), chunk_params);
  });

  const BatteryParams full_params{options.alpha, options.block_frequency_len,
                                  options.apen_m ? options.apen_m : default_apen_m(stream.size()),
                                  options.serial_m ? options.serial_m : default_serial_m(stream.size())};
  report.results = run_all(stream, full_params);

  const std::size_t n_tests = report.results.size();
  const bool count_uniformity = options.n_subsequences >= kMinChunksForUniformity;
  report.proportion_pass = 1.0;
  bool all_passed = true;
  for (std::size_t t = 0; t < n_tests; ++t) {
    TestSummary summary;
    summary.test_name = report.results[t].test_name;
    summary.full_stream = report.results[t];
    summary.chunks = options.n_subsequences;
    std::vector<double> p_values;
    p_values.reserve(options.n_subsequences);
    for (const auto& results : per_chunk) {
      p_values.push_back(results[t].p_value);
      summary.chunks_passed += results[t].passed ? 1 : 0;
    }
    summary.proportion = static_cast<double>(summary.chunks_passed) / static_cast<double>(summary.chunks);
    summary.uniformity_p = uniformity(p_values);
    summary.uniformity_counted = count_uniformity;
    summary.passed = summary.chunks_passed >= report.min_passing_chunks &&
                     (!count_uniformity || summary.uniformity_p >= kUniformityThreshold);
    report.proportion_pass = std::min(report.proportion_pass, summary.proportion);
    all_passed = all_passed && summary.passed;
    report.summaries.push_back(std::move(summary));
  }

  report.autocorrelation_band = 4.0 / std::sqrt(static_cast<double>(stream.size()));
  try {
    report.autocorrelation = autocorrelation(stream, options.max_lag);
    report.autocorrelation_passed = true;
    for (const auto& point : report.autocorrelation) {
      report.autocorrelation_max = std::max(report.autocorrelation_max, std::abs(point.coefficient));
    }
    report.autocorrelation_passed = report.autocorrelation_max < report.autocorrelation_band;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndefinedVariance && e.code() != ErrorCode::kTooShort) throw;
    report.autocorrelation.clear();
    report.autocorrelation_max = 1.0;
    report.autocorrelation_passed = false;
  }
  report.passed = all_passed && report.autocorrelation_passed;
  return report;
}

nlohmann::json to_json(const TestResult& result) {
  return {{"test", result.test_name},
          {"statistic", result.statistic},
          {"p_value", result.p_value},
          {"passed", result.passed},
          {"n_bits", result.n_bits}};
}

nlohmann::json to_json(const TestReport& report) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& s : report.summaries) {
    tests.push_back({{"test", s.test_name},
                     {"full_stream", to_json(s.full_stream)},
                     {"chunks", s.chunks},
                     {"chunks_passed", s.chunks_passed},
                     {"proportion", s.proportion},
                     {"uniformity_p", s.uniformity_p},
                     {"uniformity_counted", s.uniformity_counted},
                     {"passed", s.passed}});
  }
  nlohmann::json acf = nlohmann::json::array();
  for (const auto& point : report.autocorrelation) acf.push_back({point.lag, point.coefficient});
  return {{"alpha", report.alpha},
          {"n_bits", report.n_bits},
          {"n_subsequences", report.n_subsequences},
          {"chunk_bits", report.chunk_bits},
          {"proportion_floor", report.proportion_floor},
          {"min_passing_chunks", report.min_passing_chunks},
          {"proportion_pass", report.proportion_pass},
          {"tests", std::move(tests)},
          {"autocorrelation",
           {{"band", report.autocorrelation_band},
            {"max_abs", report.autocorrelation_max},
            {"passed", report.autocorrelation_passed},
            {"lags", std::move(acf)}}},
          {"passed", report.passed}};
}

std::string format_battery_table(const TestReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-26s %10s %12s  %s\n", "Statistical test", "P-value", "Proportion", "Result");
  out << line << std::string(62, '-') << '\n';
  for (const auto& s : report.summaries) {
    const std::string proportion = std::to_string(s.chunks_passed) + "/" + std::to_string(s.chunks);
    std::snprintf(line, sizeof line, "%-26s %10.6f %12s  %s\n", s.test_name.c_str(), s.uniformity_p,
                  proportion.c_str(), s.passed ? "Success" : "Failure");
    out << line;
  }
  std::snprintf(line, sizeof line, "%-26s %10s %12s  %s\n", "Autocorrelation",
                detail::fixed(report.autocorrelation_max, 6).c_str(),
                ("<" + detail::fixed(report.autocorrelation_band, 6)).c_str(),
                report.autocorrelation_passed ? "Success" : "Failure");
  out << line << std::string(62, '-') << '\n';
  out << "alpha " << detail::shortest(report.alpha) << ", " << report.n_subsequences << " x " << report.chunk_bits
      << " bits, minimum passing " << report.min_passing_chunks << '/' << report.n_subsequences << '\n';
  out << "overall: " << (report.passed ? "PASS" : "FAIL") << '\n';
  return out.str();
}

void export_for_external_suites(const BitStream& stream, const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto txt = stem;
  txt += ".txt";
  write_bitstream(bin, stream, Framing::kHeaderless);
  write_ascii(txt, stream);
}

}  // namespace qrng
