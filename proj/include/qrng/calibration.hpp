// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrng/apd_sim.hpp"
#include "qrng/error.hpp"

namespace qrng {

struct SweepPoint {
  double voltage = 0.0;
  double mean = 0.0;     // observed bit frequency
  double entropy = 0.0;  // binary Shannon entropy of `mean`, bits
  std::size_t n_samples = 0;

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

struct TunnelingFit {
  TunnelingModel model = TunnelingModel::reference();
  double r_squared = 0.0;          // 1 - SSE/SST over retained points
  double sse = 0.0;                // retained points only
  std::vector<double> outliers;    // excluded voltages, ascending
  std::vector<double> residuals;   // observed - model, one per input point
  std::size_t retained = 0;
  std::size_t iterations = 0;
};

/// Raised when the optimizer hits its iteration cap; carries the best
/// parameters reached so far.
class FitFailure : public Error {
 public:
  FitFailure(const std::string& message, TunnelingModel best)
      : Error(ErrorCode::kFitFailure, message), best_(best) {}
  const TunnelingModel& best() const noexcept { return best_; }

 private:
  TunnelingModel best_;
};

struct FitOptions {
  double outlier_threshold = 2.5;     // |residual| / robust scale
  double max_outlier_fraction = 0.3;
  std::size_t min_points = 5;
  std::size_t max_iterations = 500;
  double relative_tolerance = 1e-10;  // on SSE improvement
};

/// One simulated point per voltage with u_high replaced. Each point draws
/// from its own sub-seed of config_template.rng_seed.
std::vector<SweepPoint> run_sweep(const SourceConfig& config_template, std::span<const double> voltages,
                                  std::size_t pulses_per_point);

/// -p log2 p - (1 - p) log2 (1 - p), with 0 log2 0 = 0.
double binary_entropy(double p);

/// Least-squares fit of the tunneling curve to (voltage, mean) pairs.
///
/// Levenberg-Marquardt with a central-difference Jacobian, initialised at
/// V0 = min(voltage) - 0.05, A = max(mean) (floored at 0.01) and B solved from
/// the median-mean point. With `reject_outliers`, a trimmed first pass keeps
/// the best-fitting 70% of points, residuals of all points under that fit
/// are divided by the trimmed-sample scale (dof- and consistency-corrected),
/// points above the threshold are dropped and the remainder is refit once.
TunnelingFit fit_tunneling_curve(std::span<const SweepPoint> points, bool reject_outliers,
                                 const FitOptions& options = {});

/// Inverts the curve: V = V0 + B / ln(A / target_mean).
double recommend_voltage(const TunnelingModel& model, double target_mean = 0.5);
double recommend_voltage(const TunnelingFit& fit, double target_mean = 0.5);

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);
std::vector<SweepPoint> read_sweep_csv(std::istream& in);

nlohmann::json to_json(const TunnelingFit& fit);
std::string format_fit_report(const TunnelingFit& fit, double target_mean = 0.5);

}  // namespace qrng
