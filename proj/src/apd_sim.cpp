// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/apd_sim.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qrng/counter_rng.hpp"
#include "qrng/error.hpp"
#include "qrng/parallel.hpp"

namespace qrng {

TunnelingModel::TunnelingModel(double amplitude, double steepness, double critical_voltage)
    : amplitude_(amplitude), steepness_(steepness), critical_voltage_(critical_voltage) {
  require(std::isfinite(amplitude) && amplitude > 0.0 && amplitude <= 1.0, ErrorCode::kInvalidArgument,
          "tunneling amplitude must lie in (0, 1], got " + std::to_string(amplitude));
  require(std::isfinite(steepness) && steepness > 0.0, ErrorCode::kInvalidArgument,
          "tunneling steepness must be positive, got " + std::to_string(steepness));
  require(std::isfinite(critical_voltage) && critical_voltage > 0.0, ErrorCode::kInvalidArgument,
          "critical voltage must be positive, got " + std::to_string(critical_voltage));
}

TunnelingModel TunnelingModel::reference() {
  return TunnelingModel(1.0, 0.2 * std::numbers::ln2, 49.20);
}

double TunnelingModel::probability(double volts) const {
  require(std::isfinite(volts), ErrorCode::kInvalidArgument, "voltage must be finite");
  if (volts <= critical_voltage_) return 0.0;
  return amplitude_ * std::exp(-steepness_ / (volts - critical_voltage_));
}

double tunneling_probability(const TunnelingModel& model, double volts) {
  return model.probability(volts);
}

void SourceConfig::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorCode::kInvalidArgument, what); };
  check(std::isfinite(u_high), "u_high must be finite");
  check(std::isfinite(delta_u) && delta_u > 0.0, "delta_u must be positive");
  check(std::isfinite(pulse_freq) && pulse_freq > 0.0, "pulse_freq must be positive");
  check(std::isfinite(thermal_rate) && thermal_rate >= 0.0, "thermal_rate must be nonnegative");
  check(thermal_per_pulse() < 1.0, "thermal_rate / pulse_freq must be below 1");
  check(afterpulse_prob >= 0.0 && afterpulse_prob < 1.0, "afterpulse_prob must lie in [0, 1)");
  check(afterpulse_decay > 0.0 && afterpulse_decay < 1.0, "afterpulse_decay must lie in (0, 1)");
  check(protect_period == 0 || protect_duration <= protect_period,
        "protect_duration must not exceed protect_period");
}

namespace {

// No per-pulse memory: every bit is an independent function of its index.
std::vector<std::uint64_t> simulate_memoryless(const SourceConfig& config, std::size_t n_pulses,
                                               double p_fire) {
  const CounterRng rng(config.rng_seed);
  const std::uint64_t threshold = CounterRng::threshold(p_fire);
  std::vector<std::uint64_t> words(BitStream::words_for(n_pulses), 0);
  parallel_ranges(words.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t w = begin; w < end; ++w) {
      const std::uint64_t base = std::uint64_t{w} * 64;
      const unsigned limit = static_cast<unsigned>(std::min<std::uint64_t>(64, n_pulses - base));
      std::uint64_t word = 0;
      for (unsigned b = 0; b < limit; ++b) {
        const std::uint64_t i = base + b;
        const bool fire = (rng.bits(i) >> 11) < threshold && !config.in_protect_burst(i);
        word |= std::uint64_t{fire} << (63 - b);
      }
      words[w] = word;
    }
  });
  return words;
}

// Dead time and after-pulsing make pulse i depend on the most recent
// detection, so this runs as a single sequential pass. It consumes the same
// per-index uniforms as the memoryless path.
std::vector<std::uint64_t> simulate_with_memory(const SourceConfig& config, std::size_t n_pulses,
                                                double q_quiet) {
  const CounterRng rng(config.rng_seed);
  std::vector<std::uint64_t> words(BitStream::words_for(n_pulses), 0);
  std::uint64_t dead_until = 0;
  double afterpulse = 0.0;  // after-pulse probability for the current pulse
  for (std::uint64_t i = 0; i < n_pulses; ++i) {
    const double p_ap = afterpulse;
    afterpulse *= config.afterpulse_decay;
    if (afterpulse < 1e-300) afterpulse = 0.0;
    if (i < dead_until || config.in_protect_burst(i)) continue;
    const double p_fire = 1.0 - q_quiet * (1.0 - p_ap);
    if (rng.uniform(i) < p_fire) {
      words[i / 64] |= std::uint64_t{1} << (63 - i % 64);
      dead_until = i + 1 + config.deadtime_pulses;
      afterpulse = config.afterpulse_prob;
    }
  }
  return words;
}

}  // namespace

BitStream simulate_pulse_train(const SourceConfig& config, std::size_t n_pulses) {
  config.validate();
  const double p_tun = config.tunneling_per_pulse();
  const double q_quiet = (1.0 - p_tun) * (1.0 - config.thermal_per_pulse());
  auto words = (config.deadtime_pulses == 0 && config.afterpulse_prob == 0.0)
                   ? simulate_memoryless(config, n_pulses, 1.0 - q_quiet)
                   : simulate_with_memory(config, n_pulses, q_quiet);
  return BitStream::from_words(std::move(words), n_pulses);
}

double effective_mean(const SourceConfig& config) {
  config.validate();
  require(config.afterpulse_prob == 0.0 && config.protect_period == 0, ErrorCode::kUnsupportedConfiguration,
          "no closed-form mean with after-pulsing or self-protection enabled; estimate empirically");
  const double p_eff = 1.0 - (1.0 - config.tunneling_per_pulse()) * (1.0 - config.thermal_per_pulse());
  return p_eff / (1.0 + p_eff * static_cast<double>(config.deadtime_pulses));
}

}  // namespace qrng
