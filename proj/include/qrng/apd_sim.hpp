// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

#include "qrng/bitstream.hpp"

namespace qrng {

/// Per-pulse tunneling probability P(V) = A * exp(-B / (V - V0)) for V > V0,
/// zero at or below the critical voltage V0.
class TunnelingModel {
 public:
  /// Throws kInvalidArgument unless 0 < amplitude <= 1, steepness > 0 and
  /// critical_voltage > 0 (all finite).
  TunnelingModel(double amplitude, double steepness, double critical_voltage);

  /// A = 1, V0 = 49.20 V and B chosen so that P(49.40 V) = 1/2.
  static TunnelingModel reference();

  double amplitude() const noexcept { return amplitude_; }
  double steepness() const noexcept { return steepness_; }
  double critical_voltage() const noexcept { return critical_voltage_; }

  double probability(double volts) const;

  friend bool operator==(const TunnelingModel&, const TunnelingModel&) = default;

 private:
  double amplitude_;
  double steepness_;
  double critical_voltage_;
};

double tunneling_probability(const TunnelingModel& model, double volts);

/// Physical and electrical parameters of the simulated pulsed diode.
///
/// Detection mechanisms are independent Bernoulli trials per pulse combined by
/// logical OR. Dead time and self-protection bursts force zeros.
struct SourceConfig {
  TunnelingModel model = TunnelingModel::reference();
  double u_high = 49.40;               // pulse peak, volts
  double delta_u = 4.0;                // fixed high/low swing, volts
  double pulse_freq = 50e6;            // trigger frequency, Hz
  double thermal_rate = 500.0;         // thermal dark counts per second
  double afterpulse_prob = 0.0;        // after-pulse probability one pulse after a detection
  double afterpulse_decay = 0.5;       // per-pulse geometric decay of the after-pulse term
  std::uint64_t deadtime_pulses = 0;   // pulses forced to 0 after each detection
  std::uint64_t protect_period = 0;    // 0 disables self-protection bursts
  std::uint64_t protect_duration = 0;  // zero-burst length at the start of each period
  std::uint64_t rng_seed = 0x51C0FFEEULL;

  /// Throws kInvalidArgument on any violated range constraint.
  void validate() const;

  double thermal_per_pulse() const noexcept { return thermal_rate / pulse_freq; }
  double tunneling_per_pulse() const { return model.probability(u_high); }
  bool in_protect_burst(std::uint64_t pulse) const noexcept {
    return protect_period > 0 && pulse % protect_period < protect_duration;
  }
};

/// One bit per trigger pulse. Deterministic in (config, n_pulses) and
/// independent of the worker count used internally.
BitStream simulate_pulse_train(const SourceConfig& config, std::size_t n_pulses);

/// Closed-form expected bit frequency p_eff / (1 + p_eff * deadtime) where
/// p_eff = 1 - (1 - p_tun)(1 - p_th). Throws kUnsupportedConfiguration when
/// after-pulsing or self-protection is enabled.
double effective_mean(const SourceConfig& config);

}  // namespace qrng
