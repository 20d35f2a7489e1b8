// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <type_traits>
#include <sstream>

#include "qrng/counter_rng.hpp"
#include "text_util.hpp"

namespace qrng {

using nlohmann::json;

SweepConfig::SweepConfig() {
  for (int i = 0; i <= 25; ++i) voltages.push_back(49.25 + 0.01 * i);
}

PipelineConfig::PipelineConfig() {
  source.afterpulse_prob = 0.01;
  source.afterpulse_decay = 0.5;
  source.protect_period = 40'000;
  source.protect_duration = 1'000;
}

void PipelineConfig::validate() const {
  source.validate();
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::kInvalidArgument, what); };
  check(!sweep.voltages.empty(), "sweep.voltages must not be empty");
  check(sweep.pulses_per_point >= 1000, "sweep.pulses_per_point must be at least 1000");
  check(sweep.target_mean > 0.0 && sweep.target_mean < 1.0, "sweep.target_mean must lie in (0, 1)");
  check(entropy.block_bits >= 1 && entropy.block_bits <= kMaxBlockBits,
        "entropy.block_bits must lie in [1, " + std::to_string(kMaxBlockBits) + "]");
  check(extract.l >= 2, "extract.l must be at least 2");
  check(extract.epsilon_log2 <= -1, "extract.epsilon_log2 must be <= -1");
  check(tests.alpha > 0.0 && tests.alpha < 1.0, "tests.alpha must lie in (0, 1)");
  check(tests.n_subsequences >= 1, "tests.n_subsequences must be positive");
  check(tests.max_lag >= 1, "tests.max_lag must be positive");
  check(std::isfinite(rates.raw_rate) && rates.raw_rate >= 0.0, "rates.raw_rate must be nonnegative");
  check(!io.output_dir.empty(), "io.output_dir must not be empty");
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace {

void reject_unknown(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  require(obj.is_object(), ErrorCode::kInvalidArgument, std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto k : keys) known = known || k == key;
    require(known, ErrorCode::kInvalidArgument,
            "unknown config key '" + (where.empty() ? key : std::string(where) + "." + key) + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, std::string_view where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string name = std::string(where) + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      require(it->is_boolean(), ErrorCode::kInvalidArgument, name + " must be a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      require(it->is_string(), ErrorCode::kInvalidArgument, name + " must be a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      require(it->is_number(), ErrorCode::kInvalidArgument, name + " must be a number");
    } else if constexpr (std::is_unsigned_v<T>) {
      require(it->is_number_unsigned(), ErrorCode::kInvalidArgument, name + " must be a nonnegative integer");
    } else {
      require(it->is_number_integer(), ErrorCode::kInvalidArgument, name + " must be an integer");
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvalidArgument, name + ": " + e.what());
  }
}

}  // namespace

PipelineConfig config_from_json(const json& doc) {
  PipelineConfig c;
  reject_unknown(doc, "", {"source", "n_pulses", "sweep", "entropy", "extract", "tests", "rates", "io"});
  read(doc, "n_pulses", c.n_pulses, "");

  if (const auto it = doc.find("source"); it != doc.end()) {
    const json& s = *it;
    reject_unknown(s, "source",
                   {"model", "u_high", "delta_u", "pulse_freq", "thermal_rate", "afterpulse_prob",
                    "afterpulse_decay", "deadtime_pulses", "protect_period", "protect_duration", "rng_seed"});
    if (const auto m = s.find("model"); m != s.end()) {
      reject_unknown(*m, "source.model", {"A", "B", "V0"});
      double a = c.source.model.amplitude();
      double b = c.source.model.steepness();
      double v0 = c.source.model.critical_voltage();
      read(*m, "A", a, "source.model");
      read(*m, "B", b, "source.model");
      read(*m, "V0", v0, "source.model");
      c.source.model = TunnelingModel(a, b, v0);
    }
    read(s, "u_high", c.source.u_high, "source");
    read(s, "delta_u", c.source.delta_u, "source");
    read(s, "pulse_freq", c.source.pulse_freq, "source");
    read(s, "thermal_rate", c.source.thermal_rate, "source");
    read(s, "afterpulse_prob", c.source.afterpulse_prob, "source");
    read(s, "afterpulse_decay", c.source.afterpulse_decay, "source");
    read(s, "deadtime_pulses", c.source.deadtime_pulses, "source");
    read(s, "protect_period", c.source.protect_period, "source");
    read(s, "protect_duration", c.source.protect_duration, "source");
    read(s, "rng_seed", c.source.rng_seed, "source");
  }
  if (const auto it = doc.find("sweep"); it != doc.end()) {
    reject_unknown(*it, "sweep", {"voltages", "pulses_per_point", "reject_outliers", "target_mean"});
    if (const auto v = it->find("voltages"); v != it->end()) {
      require(v->is_array(), ErrorCode::kInvalidArgument, "sweep.voltages must be an array");
      c.sweep.voltages.clear();
      for (const auto& x : *v) {
        require(x.is_number(), ErrorCode::kInvalidArgument, "sweep.voltages must hold numbers");
        c.sweep.voltages.push_back(x.get<double>());
      }
    }
    read(*it, "pulses_per_point", c.sweep.pulses_per_point, "sweep");
    read(*it, "reject_outliers", c.sweep.reject_outliers, "sweep");
    read(*it, "target_mean", c.sweep.target_mean, "sweep");
  }
  if (const auto it = doc.find("entropy"); it != doc.end()) {
    reject_unknown(*it, "entropy", {"block_bits"});
    read(*it, "block_bits", c.entropy.block_bits, "entropy");
  }
  if (const auto it = doc.find("extract"); it != doc.end()) {
    reject_unknown(*it, "extract", {"l", "epsilon_log2", "h0", "sign", "method", "seed_path", "seed_key"});
    read(*it, "l", c.extract.l, "extract");
    read(*it, "epsilon_log2", c.extract.epsilon_log2, "extract");
    auto text = [&](const char* key) {
      std::string value;
      read(*it, key, value, "extract");
      return value;
    };
    if (auto v = text("h0"); !v.empty()) c.extract.sizing.h0_mode = parse_h0_mode(v);
    if (auto v = text("sign"); !v.empty()) c.extract.sizing.sign = parse_security_sign(v);
    if (auto v = text("method"); !v.empty()) c.extract.method = parse_extract_method(v);
    read(*it, "seed_path", c.extract.seed_path, "extract");
    read(*it, "seed_key", c.extract.seed_key, "extract");
  }
  if (const auto it = doc.find("tests"); it != doc.end()) {
    reject_unknown(*it, "tests", {"alpha", "n_subsequences", "max_lag"});
    read(*it, "alpha", c.tests.alpha, "tests");
    read(*it, "n_subsequences", c.tests.n_subsequences, "tests");
    read(*it, "max_lag", c.tests.max_lag, "tests");
  }
  if (const auto it = doc.find("rates"); it != doc.end()) {
    reject_unknown(*it, "rates", {"raw_rate"});
    read(*it, "raw_rate", c.rates.raw_rate, "rates");
  }
  if (const auto it = doc.find("io"); it != doc.end()) {
    reject_unknown(*it, "io", {"output_dir", "headerless", "export_ascii"});
    read(*it, "output_dir", c.io.output_dir, "io");
    read(*it, "headerless", c.io.headerless, "io");
    read(*it, "export_ascii", c.io.export_ascii, "io");
  }
  c.validate();
  return c;
}

json to_json(const PipelineConfig& c) {
  const auto& s = c.source;
  return {
      {"source",
       {{"model",
         {{"A", s.model.amplitude()}, {"B", s.model.steepness()}, {"V0", s.model.critical_voltage()}}},
        {"u_high", s.u_high},
        {"delta_u", s.delta_u},
        {"pulse_freq", s.pulse_freq},
        {"thermal_rate", s.thermal_rate},
        {"afterpulse_prob", s.afterpulse_prob},
        {"afterpulse_decay", s.afterpulse_decay},
        {"deadtime_pulses", s.deadtime_pulses},
        {"protect_period", s.protect_period},
        {"protect_duration", s.protect_duration},
        {"rng_seed", s.rng_seed}}},
      {"n_pulses", c.n_pulses},
      {"sweep",
       {{"voltages", c.sweep.voltages},
        {"pulses_per_point", c.sweep.pulses_per_point},
        {"reject_outliers", c.sweep.reject_outliers},
        {"target_mean", c.sweep.target_mean}}},
      {"entropy", {{"block_bits", c.entropy.block_bits}}},
      {"extract",
       {{"l", c.extract.l},
        {"epsilon_log2", c.extract.epsilon_log2},
        {"h0", to_string(c.extract.sizing.h0_mode)},
        {"sign", to_string(c.extract.sizing.sign)},
        {"method", to_string(c.extract.method)},
        {"seed_path", c.extract.seed_path},
        {"seed_key", c.extract.seed_key}}},
      {"tests",
       {{"alpha", c.tests.alpha}, {"n_subsequences", c.tests.n_subsequences}, {"max_lag", c.tests.max_lag}}},
      {"rates", {{"raw_rate", c.rates.raw_rate}}},
      {"io",
       {{"output_dir", c.io.output_dir}, {"headerless", c.io.headerless}, {"export_ascii", c.io.export_ascii}}},
  };
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string_view::npos && eq > 0, ErrorCode::kInvalidArgument,
          "override '" + std::string(assignment) + "' is not of the form key.path=value");
  const std::string_view path = assignment.substr(0, eq);
  const std::string text(assignment.substr(eq + 1));

  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key(path.substr(start, dot == std::string_view::npos ? path.size() - start : dot - start));
    require(!key.empty(), ErrorCode::kInvalidArgument, "empty key in override '" + std::string(assignment) + "'");
    if (node->is_null()) *node = json::object();
    require(node->is_object(), ErrorCode::kInvalidArgument,
            "override '" + std::string(assignment) + "' descends into a non-object");
    node = &(*node)[key];
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  *node = std::move(value);
}

// ---------------------------------------------------------------------------

RateReport make_rate_report(double raw_rate, std::size_t l, std::size_t m) {
  require(l > 0, ErrorCode::kInvalidArgument, "l must be positive");
  RateReport r;
  r.raw_rate = raw_rate;
  r.l = l;
  r.m = m;
  r.extraction_ratio = static_cast<double>(m) / static_cast<double>(l);
  r.final_rate = raw_rate * static_cast<double>(m) / static_cast<double>(l);
  return r;
}

json to_json(const RateReport& r) {
  return {{"raw_rate", r.raw_rate},
          {"l", r.l},
          {"m", r.m},
          {"extraction_ratio", r.extraction_ratio},
          {"final_rate", r.final_rate}};
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kConfig: return "config";
    case Stage::kSimulate: return "simulate";
    case Stage::kCalibrate: return "calibrate";
    case Stage::kEntropy: return "entropy";
    case Stage::kExtract: return "extract";
    case Stage::kTest: return "test";
    case Stage::kExport: return "export";
  }
  return "unknown";
}

StageError::StageError(Stage stage, const Error& cause)
    : Error(cause.code(), "[" + std::string(to_string(stage)) + "] " + std::string(to_string(cause.code())) +
                              ": " + cause.what()),
      stage_(stage) {}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFitFailure:
    case ErrorCode::kInsufficientData:
    case ErrorCode::kOutputTooShort:
    case ErrorCode::kTooShort:
    case ErrorCode::kUndefinedVariance:
      return kExitQuality;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnsupportedConfiguration:
    case ErrorCode::kUnreachableTarget:
    case ErrorCode::kFormat:
    case ErrorCode::kIo:
      return kExitUsage;
  }
  return kExitUsage;
}

double counting_rate(const BitStream& raw, double pulse_freq) {
  if (raw.empty()) return 0.0;
  return static_cast<double>(raw.count_ones()) * pulse_freq / static_cast<double>(raw.size());
}

BitStream load_or_make_seed(const ExtractConfig& config, std::size_t m) {
  if (config.seed_path.empty()) return make_seed(config.l, m, config.seed_key);
  BitStream seed = read_bitstream(config.seed_path);
  require(seed.size() >= config.l + m - 1, ErrorCode::kInvalidArgument,
          "seed file " + config.seed_path + " holds " + std::to_string(seed.size()) + " bits, need " +
              std::to_string(config.l + m - 1));
  return seed.slice(0, config.l + m - 1);
}

double effective_raw_rate(const PipelineConfig& config) {
  return config.rates.raw_rate > 0.0 ? config.rates.raw_rate : config.source.pulse_freq;
}

SourceConfig sweep_source(const PipelineConfig& config) {
  SourceConfig source = config.source;
  source.rng_seed = derive_seed(config.source.rng_seed, 0xCA11B);
  return source;
}

namespace {

template <typename Fn>
auto in_stage(Stage stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log) {
  in_stage(Stage::kConfig, [&] { config.validate(); });
  const std::filesystem::path dir = config.io.output_dir;
  in_stage(Stage::kConfig, [&] {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec, ErrorCode::kIo, "cannot create output directory " + dir.string() + ": " + ec.message());
  });
  const Framing framing = config.io.headerless ? Framing::kHeaderless : Framing::kHeader;
  PipelineResult result;
  auto artifact = [&](const std::string& name) {
    result.artifacts.push_back(dir / name);
    return dir / name;
  };

  const BitStream raw = in_stage(Stage::kSimulate, [&] {
    BitStream bits = simulate_pulse_train(config.source, config.n_pulses);
    write_bitstream(artifact("raw.trng"), bits, framing);
    if (config.io.export_ascii) export_for_external_suites(bits, artifact("raw"));
    return bits;
  });
  result.counts_per_second = counting_rate(raw, config.source.pulse_freq);
  log << "simulate: " << raw.size() << " pulses, " << detail::shortest(result.counts_per_second)
      << " counts per simulated second\n";

  in_stage(Stage::kCalibrate, [&] {
    const auto points = run_sweep(sweep_source(config), config.sweep.voltages, config.sweep.pulses_per_point);
    {
      std::ostringstream csv;
      write_sweep_csv(csv, points);
      write_text(artifact("sweep.csv"), csv.str());
    }
    result.fit = fit_tunneling_curve(points, config.sweep.reject_outliers);
    result.recommended_voltage = recommend_voltage(result.fit, config.sweep.target_mean);
    json fit = to_json(result.fit);
    fit["target_mean"] = config.sweep.target_mean;
    fit["recommended_voltage"] = result.recommended_voltage;
    write_json(artifact("fit.json"), fit);
    write_text(artifact("fit.txt"), format_fit_report(result.fit, config.sweep.target_mean));
  });
  log << "calibrate: r^2 " << detail::fixed(result.fit.r_squared, 6) << ", " << result.fit.outliers.size()
      << " outliers, recommended U_H " << detail::fixed(result.recommended_voltage, 4) << " V\n";

  in_stage(Stage::kEntropy, [&] {
    result.entropy = min_entropy(raw, config.entropy.block_bits);
    write_json(artifact("entropy.json"), to_json(result.entropy));
    require(result.entropy.h_min > 0.0, ErrorCode::kInsufficientData, "raw stream carries no min-entropy");
  });
  log << "entropy: h_min " << detail::fixed(result.entropy.h_min, 4) << " bits per " << config.entropy.block_bits
      << "-bit block\n";

  const BitStream extracted = in_stage(Stage::kExtract, [&] {
    result.m = compute_output_length(config.extract.l, result.entropy.h_min, config.entropy.block_bits,
                                     config.extract.epsilon_log2, config.extract.sizing);
    BitStream seed = load_or_make_seed(config.extract, result.m);
    write_bitstream(artifact("seed.trng"), seed);
    const ExtractorParams params(config.extract.l, result.m, result.entropy.h_min, config.entropy.block_bits,
                                 config.extract.epsilon_log2, std::move(seed));
    result.extraction = extract_stream(raw, params, config.extract.method);
    result.rate = make_rate_report(effective_raw_rate(config), config.extract.l, result.m);
    write_bitstream(artifact("extracted.trng"), result.extraction.output, framing);
    if (config.io.export_ascii) export_for_external_suites(result.extraction.output, artifact("extracted"));
    json rate = to_json(result.rate);
    rate["chunks"] = result.extraction.chunks;
    rate["discarded_bits"] = result.extraction.discarded_bits;
    rate["extracted_bits"] = result.extraction.output.size();
    write_json(artifact("rate.json"), rate);
    return result.extraction.output;
  });
  log << "extract: l " << config.extract.l << ", m " << result.m << ", " << result.extraction.output.size()
      << " bits, final rate " << detail::fixed(result.rate.final_rate / 1e6, 4) << " Mb/s\n";

  in_stage(Stage::kTest, [&] {
    BatteryOptions options;
    options.alpha = config.tests.alpha;
    options.n_subsequences = config.tests.n_subsequences;
    options.max_lag = config.tests.max_lag;
    result.battery = run_battery(extracted, options);
    write_json(artifact("battery.json"), to_json(result.battery));
    write_text(artifact("battery.txt"), format_battery_table(result.battery));
  });
  log << "test: " << (result.battery.passed ? "PASS" : "FAIL") << " (smallest proportion "
      << detail::fixed(result.battery.proportion_pass, 2) << ")\n";
  return result;
}

}  // namespace qrng
