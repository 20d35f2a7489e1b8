// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "qrng/counter_rng.hpp"
#include "text_util.hpp"

namespace qrng {

std::vector<SweepPoint> run_sweep(const SourceConfig& config_template, std::span<const double> voltages,
                                  std::size_t pulses_per_point) {
  require(!voltages.empty(), ErrorCode::kInvalidArgument, "sweep needs at least one voltage");
  require(pulses_per_point >= 1000, ErrorCode::kInvalidArgument, "sweep needs at least 1000 pulses per point");
  for (std::size_t i = 1; i < voltages.size(); ++i) {
    require(voltages[i] > voltages[i - 1], ErrorCode::kInvalidArgument,
            "sweep voltages must be strictly increasing");
  }
  config_template.validate();

  std::vector<SweepPoint> points(voltages.size());
  for (std::size_t i = 0; i < voltages.size(); ++i) {
    SourceConfig config = config_template;
    config.u_high = voltages[i];
    config.rng_seed = derive_seed(config_template.rng_seed, i);
    const BitStream bits = simulate_pulse_train(config, pulses_per_point);
    const double mean = static_cast<double>(bits.count_ones()) / static_cast<double>(pulses_per_point);
    points[i] = SweepPoint{voltages[i], mean, binary_entropy(mean), pulses_per_point};
  }
  return points;
}

double binary_entropy(double p) {
  require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument, "probability must lie in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

namespace {

using Params = std::array<double, 3>;  // A, B, V0

double curve(const Params& p, double v) {
  const double d = v - p[2];
  return d > 0.0 ? p[0] * std::exp(-p[1] / d) : 0.0;
}

bool feasible(const Params& p) {
  return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]) && p[0] > 0.0 && p[0] <= 1.0 &&
         p[1] > 0.0 && p[2] > 0.0;
}

struct Sample {
  std::vector<double> v;
  std::vector<double> y;
};

double sse_of(const Params& p, const Sample& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.v.size(); ++i) {
    const double r = s.y[i] - curve(p, s.v[i]);
    total += r * r;
  }
  return total;
}

Params initial_guess(const Sample& s) {
  const double v_min = *std::min_element(s.v.begin(), s.v.end());
  const double y_max = *std::max_element(s.y.begin(), s.y.end());
  Params p{};
  p[2] = v_min - 0.05;
  p[0] = std::clamp(y_max, 0.01, 1.0);
  std::vector<std::size_t> order(s.y.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.y[a] < s.y[b]; });
  const std::size_t med = order[order.size() / 2];
  const double ratio = std::clamp(s.y[med] / p[0], 1e-9, 0.999);
  p[1] = -(s.v[med] - p[2]) * std::log(ratio);
  if (!(p[2] > 0.0)) p[2] = v_min * 0.5;
  return p;
}

struct LmResult {
  Params params{};
  double sse = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

LmResult levenberg_marquardt(const Sample& s, Params p, const FitOptions& opt) {
  const std::size_t n = s.v.size();
  LmResult res{p, sse_of(p, s), 0, false};
  double lambda = 1e-3;
  Eigen::MatrixXd jac(n, 3);
  Eigen::VectorXd resid(n);

  while (res.iterations < opt.max_iterations) {
    ++res.iterations;
    for (std::size_t i = 0; i < n; ++i) resid(static_cast<Eigen::Index>(i)) = s.y[i] - curve(res.params, s.v[i]);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6 * std::max(std::abs(res.params[static_cast<std::size_t>(k)]), 1e-2);
      Params hi = res.params;
      Params lo = res.params;
      hi[static_cast<std::size_t>(k)] += h;
      lo[static_cast<std::size_t>(k)] -= h;
      for (std::size_t i = 0; i < n; ++i) {
        jac(static_cast<Eigen::Index>(i), k) = (curve(hi, s.v[i]) - curve(lo, s.v[i])) / (2.0 * h);
      }
    }
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d jtr = jac.transpose() * resid;
    const double diag_floor = 1e-12 * std::max(jtj.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix3d damped = jtj;
      for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(jtj(k, k), diag_floor);
      const Eigen::Vector3d step = damped.ldlt().solve(jtr);
      Params trial{res.params[0] + step(0), res.params[1] + step(1), res.params[2] + step(2)};
      const double trial_sse = feasible(trial) ? sse_of(trial, s) : std::numeric_limits<double>::infinity();
      if (step.allFinite() && trial_sse < res.sse) {
        const double improvement = res.sse - trial_sse;
        const bool tiny = improvement <= opt.relative_tolerance * res.sse;
        res.params = trial;
        res.sse = trial_sse;
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (tiny || res.sse < 1e-300) {
          res.converged = true;
          return res;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left at this point: a (local) minimum.
          res.converged = true;
          return res;
        }
      }
    }
  }
  return res;
}

LmResult fit_sample(const Sample& s, const FitOptions& opt) {
  return levenberg_marquardt(s, initial_guess(s), opt);
}

Sample subset(const Sample& s, const std::vector<bool>& keep) {
  Sample out;
  for (std::size_t i = 0; i < s.v.size(); ++i) {
    if (keep[i]) {
      out.v.push_back(s.v[i]);
      out.y.push_back(s.y[i]);
    }
  }
  return out;
}

double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

// Least trimmed squares over `keep_count` of the points. Small problems are
// searched exhaustively; larger ones run concentration steps from the full
// fit and from every contiguous-window removal.
Params trimmed_fit(const Sample& s, std::size_t keep_count, const FitOptions& opt) {
  const std::size_t n = s.v.size();
  const std::size_t drop = n - keep_count;
  Params best_params{};
  double best_sse = std::numeric_limits<double>::infinity();
  auto consider = [&](const LmResult& r) {
    if (r.sse < best_sse) {
      best_sse = r.sse;
      best_params = r.params;
    }
  };

  if (drop == 0) return fit_sample(s, opt).params;

  if (binomial(n, drop) <= 5000.0) {
    std::vector<bool> mask(n, true);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(drop), false);
    // Enumerate every placement of `drop` falses.
    std::sort(mask.begin(), mask.end());
    do {
      consider(fit_sample(subset(s, mask), opt));
    } while (std::next_permutation(mask.begin(), mask.end()));
    return best_params;
  }

  std::vector<Params> starts{fit_sample(s, opt).params};
  for (std::size_t first = 0; first + drop <= n; ++first) {
    std::vector<bool> mask(n, true);
    for (std::size_t i = first; i < first + drop; ++i) mask[i] = false;
    starts.push_back(fit_sample(subset(s, mask), opt).params);
  }
  for (Params p : starts) {
    std::vector<bool> kept;
    for (int step = 0; step < 20; ++step) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::vector<double> abs_r(n);
      for (std::size_t i = 0; i < n; ++i) abs_r[i] = std::abs(s.y[i] - curve(p, s.v[i]));
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return abs_r[a] < abs_r[b]; });
      std::vector<bool> mask(n, false);
      for (std::size_t i = 0; i < keep_count; ++i) mask[order[i]] = true;
      if (mask == kept) break;
      kept = mask;
      const LmResult r = levenberg_marquardt(subset(s, mask), p, opt);
      p = r.params;
      consider(r);
    }
  }
  return best_params;
}

// Residual scale from the `keep_count` smallest residuals, with the
// degrees-of-freedom correction and the normal consistency factor for
// trimming to a fraction alpha = keep_count / n.
double trimmed_scale(std::vector<double> abs_r, std::size_t keep_count) {
  const std::size_t n = abs_r.size();
  std::sort(abs_r.begin(), abs_r.end());
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < keep_count; ++i) sum_sq += abs_r[i] * abs_r[i];
  const double dof = static_cast<double>(keep_count > 3 ? keep_count - 3 : 1);
  double s = std::sqrt(sum_sq / dof);
  if (keep_count < n) {
    const double alpha = static_cast<double>(keep_count) / static_cast<double>(n);
    const boost::math::normal unit;
    const double q = boost::math::quantile(unit, 0.5 * (1.0 + alpha));
    s /= std::sqrt(1.0 - 2.0 * q * boost::math::pdf(unit, q) / alpha);
  }
  return s;
}

double r_squared(const Sample& s, double sse) {
  const double mean = std::accumulate(s.y.begin(), s.y.end(), 0.0) / static_cast<double>(s.y.size());
  double sst = 0.0;
  for (double y : s.y) sst += (y - mean) * (y - mean);
  if (sst == 0.0) return sse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  return 1.0 - sse / sst;
}

TunnelingModel to_model(const Params& p) { return TunnelingModel(p[0], p[1], p[2]); }

}  // namespace

TunnelingFit fit_tunneling_curve(std::span<const SweepPoint> points, bool reject_outliers,
                                 const FitOptions& options) {
  require(points.size() >= options.min_points, ErrorCode::kInsufficientData,
          "curve fit needs at least " + std::to_string(options.min_points) + " points");
  Sample all;
  for (const auto& p : points) {
    require(std::isfinite(p.voltage) && std::isfinite(p.mean), ErrorCode::kInvalidArgument,
            "sweep points must be finite");
    all.v.push_back(p.voltage);
    all.y.push_back(p.mean);
  }
  {
    std::vector<double> sorted = all.v;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorCode::kInvalidArgument,
            "sweep voltages must be distinct");
  }

  const std::size_t n = all.v.size();
  std::vector<bool> keep(n, true);
  if (reject_outliers) {
    const auto max_drop = static_cast<std::size_t>(std::floor(options.max_outlier_fraction * static_cast<double>(n)));
    const std::size_t trim = std::min(max_drop, n - options.min_points);
    const Params robust = trimmed_fit(all, n - trim, options);
    std::vector<double> abs_r(n);
    double y_min = all.y[0];
    double y_max = all.y[0];
    for (std::size_t i = 0; i < n; ++i) {
      abs_r[i] = std::abs(all.y[i] - curve(robust, all.v[i]));
      y_min = std::min(y_min, all.y[i]);
      y_max = std::max(y_max, all.y[i]);
    }
    const double scale = std::max(trimmed_scale(abs_r, n - trim), 1e-9 * std::max(y_max - y_min, 1e-12));
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (abs_r[i] / scale > options.outlier_threshold) {
        keep[i] = false;
        ++dropped;
      }
    }
    require(dropped <= max_drop, ErrorCode::kInsufficientData,
            "outlier rejection would remove " + std::to_string(dropped) + " of " + std::to_string(n) + " points");
    require(n - dropped >= options.min_points, ErrorCode::kInsufficientData,
            "fewer than " + std::to_string(options.min_points) + " points remain after outlier rejection");
  }

  const Sample retained = subset(all, keep);
  LmResult result = fit_sample(retained, options);
  if (!result.converged) {
    throw FitFailure("curve fit did not converge within " + std::to_string(options.max_iterations) + " iterations",
                     to_model(result.params));
  }

  TunnelingFit fit{to_model(result.params), r_squared(retained, result.sse), result.sse, {}, {}, retained.v.size(),
                   result.iterations};
  for (std::size_t i = 0; i < n; ++i) {
    fit.residuals.push_back(all.y[i] - curve(result.params, all.v[i]));
    if (!keep[i]) fit.outliers.push_back(all.v[i]);
  }
  std::sort(fit.outliers.begin(), fit.outliers.end());
  return fit;
}

double recommend_voltage(const TunnelingModel& model, double target_mean) {
  require(std::isfinite(target_mean) && target_mean > 0.0, ErrorCode::kInvalidArgument,
          "target mean must be positive");
  require(target_mean < model.amplitude(), ErrorCode::kUnreachableTarget,
          "target mean " + detail::shortest(target_mean) + " is not below the curve amplitude " +
              detail::shortest(model.amplitude()));
  return model.critical_voltage() + model.steepness() / std::log(model.amplitude() / target_mean);
}

double recommend_voltage(const TunnelingFit& fit, double target_mean) {
  return recommend_voltage(fit.model, target_mean);
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << "voltage,mean,entropy,n_samples\n";
  for (const auto& p : points) {
    out << detail::shortest(p.voltage) << ',' << detail::shortest(p.mean) << ',' << detail::shortest(p.entropy)
        << ',' << p.n_samples << '\n';
  }
}

std::vector<SweepPoint> read_sweep_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::kFormat, "empty sweep CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "voltage,mean,entropy,n_samples", ErrorCode::kFormat, "unexpected sweep CSV header: " + line);
  std::vector<SweepPoint> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::array<double, 4> fields{};
    std::size_t start = 0;
    for (std::size_t f = 0; f < 4; ++f) {
      const std::size_t comma = f < 3 ? line.find(',', start) : line.size();
      require(comma != std::string::npos && detail::parse_double(std::string_view(line).substr(start, comma - start), fields[f]),
              ErrorCode::kFormat, "malformed sweep CSV line " + std::to_string(line_no));
      start = comma + 1;
    }
    require(fields[3] >= 0.0, ErrorCode::kFormat, "negative sample count on line " + std::to_string(line_no));
    points.push_back({fields[0], fields[1], fields[2], static_cast<std::size_t>(fields[3])});
  }
  return points;
}

nlohmann::json to_json(const TunnelingFit& fit) {
  return nlohmann::json{
      {"A", fit.model.amplitude()},
      {"B", fit.model.steepness()},
      {"V0", fit.model.critical_voltage()},
      {"r_squared", fit.r_squared},
      {"sse", fit.sse},
      {"outliers", fit.outliers},
      {"residuals", fit.residuals},
      {"retained", fit.retained},
      {"iterations", fit.iterations},
  };
}

std::string format_fit_report(const TunnelingFit& fit, double target_mean) {
  std::ostringstream os;
  os << "tunneling curve fit: P(V) = A * exp(-B / (V - V0))\n";
  os << "  A          = " << detail::fixed(fit.model.amplitude(), 6) << "\n";
  os << "  B          = " << detail::fixed(fit.model.steepness(), 6) << " V\n";
  os << "  V0         = " << detail::fixed(fit.model.critical_voltage(), 6) << " V\n";
  os << "  r_squared  = " << detail::fixed(fit.r_squared, 6) << "\n";
  os << "  points     = " << fit.residuals.size() << " (retained " << fit.retained << ")\n";
  os << "  outliers   =";
  if (fit.outliers.empty()) os << " none";
  for (double v : fit.outliers) os << ' ' << detail::fixed(v, 4);
  os << "\n  iterations = " << fit.iterations << "\n";
  try {
    os << "  voltage for mean " << detail::fixed(target_mean, 3) << " = "
       << detail::fixed(recommend_voltage(fit, target_mean), 4) << " V\n";
  } catch (const Error& e) {
    os << "  voltage for mean " << detail::fixed(target_mean, 3) << " = unreachable (" << e.what() << ")\n";
  }
  return os.str();
}

}  // namespace qrng
