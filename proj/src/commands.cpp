// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/commands.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrng/pipeline.hpp"
#include "text_util.hpp"

namespace qrng {

namespace {

using nlohmann::json;

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool headerless = false;
  bool export_ascii = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--set", overrides, "Override a config field, e.g. --set extract.l=4096")->take_all();
    app.add_flag("--headerless", headerless, "Read and write packed payloads without the file header");
    app.add_flag("--export-ascii", export_ascii, "Also write ASCII and headerless copies for external suites");
  }

  PipelineConfig load() const {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      require(static_cast<bool>(in), ErrorCode::kIo, "cannot open config file " + config_path);
      doc = json::parse(in, nullptr, false);
      require(!doc.is_discarded(), ErrorCode::kFormat, config_path + ": not valid JSON");
    }
    for (const auto& o : overrides) apply_override(doc, o);
    PipelineConfig config = config_from_json(doc);
    if (headerless) config.io.headerless = true;
    if (export_ascii) config.io.export_ascii = true;
    return config;
  }

  Framing framing() const { return headerless ? Framing::kHeaderless : Framing::kHeader; }
};

std::filesystem::path or_default(const std::string& given, const PipelineConfig& config, const char* name) {
  if (!given.empty()) return given;
  std::filesystem::create_directories(config.io.output_dir);
  return std::filesystem::path(config.io.output_dir) / name;
}

std::filesystem::path stem_of(const std::filesystem::path& path) {
  auto stem = path;
  stem.replace_extension();
  return stem;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path.string());
}

// Refuses to let an export overwrite the file it was read from.
void export_copies(const BitStream& bits, const std::filesystem::path& stem, const std::filesystem::path& source) {
  auto bin = stem;
  bin += ".bin";
  auto txt = stem;
  txt += ".txt";
  std::error_code ec;
  require(!std::filesystem::equivalent(bin, source, ec) && !std::filesystem::equivalent(txt, source, ec),
          ErrorCode::kInvalidArgument, "export would overwrite its input " + source.string() + "; pass --stem");
  export_for_external_suites(bits, stem);
}

template <typename Fn>
int run_stage(Stage stage, std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError& e) {
    err << "qrng: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const Error& e) {
    err << "qrng: [" << to_string(stage) << "] " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "qrng: [" << to_string(stage) << "] io: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulated tunneling QRNG: source model, calibration, min-entropy, Toeplitz extraction, tests",
               "qrng"};
  app.require_subcommand(1);
  int status = kExitOk;

  // simulate ---------------------------------------------------------------
  Common sim_common;
  std::optional<std::size_t> sim_pulses;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Simulate a raw pulse train");
  sim_common.attach(*sim);
  sim->add_option("--pulses", sim_pulses, "Number of trigger pulses (default: n_pulses from config)");
  sim->add_option("--out", sim_out, "Output file (default: <output_dir>/raw.trng)");
  sim->callback([&] {
    status = run_stage(Stage::kSimulate, err, [&] {
      const PipelineConfig config = sim_common.load();
      const std::size_t n = sim_pulses.value_or(config.n_pulses);
      const BitStream raw = simulate_pulse_train(config.source, n);
      const auto path = or_default(sim_out, config, "raw.trng");
      write_bitstream(path, raw, sim_common.framing());
      if (config.io.export_ascii) export_for_external_suites(raw, stem_of(path));
      const double seconds = static_cast<double>(n) / config.source.pulse_freq;
      out << "pulses " << n << ", ones " << raw.count_ones() << ", simulated " << detail::shortest(seconds)
          << " s, counts per second " << detail::shortest(counting_rate(raw, config.source.pulse_freq)) << '\n';
      return kExitOk;
    });
  });

  // calibrate --------------------------------------------------------------
  Common cal_common;
  std::string cal_in_csv;
  std::string cal_out_csv;
  std::string cal_out_fit;
  auto* cal = app.add_subcommand("calibrate", "Run a voltage sweep and fit the tunneling curve");
  cal_common.attach(*cal);
  cal->add_option("--in-csv", cal_in_csv, "Fit an existing sweep CSV instead of simulating one");
  cal->add_option("--out-csv", cal_out_csv, "Sweep CSV (default: <output_dir>/sweep.csv)");
  cal->add_option("--out-fit", cal_out_fit, "Fit JSON (default: <output_dir>/fit.json)");
  cal->callback([&] {
    status = run_stage(Stage::kCalibrate, err, [&] {
      const PipelineConfig config = cal_common.load();
      std::vector<SweepPoint> points;
      if (!cal_in_csv.empty()) {
        std::ifstream in(cal_in_csv);
        require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + cal_in_csv);
        points = read_sweep_csv(in);
      } else {
        points = run_sweep(sweep_source(config), config.sweep.voltages, config.sweep.pulses_per_point);
        std::ostringstream csv;
        write_sweep_csv(csv, points);
        write_file(or_default(cal_out_csv, config, "sweep.csv"), csv.str());
      }
      const TunnelingFit fit = fit_tunneling_curve(points, config.sweep.reject_outliers);
      json doc = to_json(fit);
      doc["target_mean"] = config.sweep.target_mean;
      doc["recommended_voltage"] = recommend_voltage(fit, config.sweep.target_mean);
      write_file(or_default(cal_out_fit, config, "fit.json"), doc.dump(2) + "\n");
      out << format_fit_report(fit, config.sweep.target_mean);
      return kExitOk;
    });
  });

  // entropy ----------------------------------------------------------------
  Common ent_common;
  std::string ent_in;
  std::optional<unsigned> ent_block;
  auto* ent = app.add_subcommand("entropy", "Estimate block min-entropy of a bit file");
  ent_common.attach(*ent);
  ent->add_option("--in", ent_in, "Input bit file")->required();
  ent->add_option("--block-bits", ent_block, "Block width in bits (default: entropy.block_bits)");
  ent->callback([&] {
    status = run_stage(Stage::kEntropy, err, [&] {
      const PipelineConfig config = ent_common.load();
      const BitStream bits = read_bitstream(ent_in, ent_common.framing());
      out << to_json(min_entropy(bits, ent_block.value_or(config.entropy.block_bits))).dump(2) << '\n';
      return kExitOk;
    });
  });

  // extract ----------------------------------------------------------------
  Common ext_common;
  std::string ext_in;
  std::string ext_out;
  std::string ext_seed_out;
  std::optional<double> ext_h_min;
  auto* ext = app.add_subcommand("extract", "Toeplitz-hash a raw bit file");
  ext_common.attach(*ext);
  ext->add_option("--in", ext_in, "Raw bit file")->required();
  ext->add_option("--out", ext_out, "Extracted output (default: <output_dir>/extracted.trng)");
  ext->add_option("--seed-out", ext_seed_out, "Also write the Toeplitz seed to this file");
  ext->add_option("--h-min", ext_h_min, "Per-block min-entropy (default: estimated from the input)");
  ext->callback([&] {
    status = run_stage(Stage::kExtract, err, [&] {
      const PipelineConfig config = ext_common.load();
      const BitStream raw = read_bitstream(ext_in, ext_common.framing());
      const unsigned block_bits = config.entropy.block_bits;
      const double h_min = ext_h_min ? *ext_h_min : min_entropy(raw, block_bits).h_min;
      const std::size_t m =
          compute_output_length(config.extract.l, h_min, block_bits, config.extract.epsilon_log2,
                                config.extract.sizing);
      BitStream seed = load_or_make_seed(config.extract, m);
      if (!ext_seed_out.empty()) write_bitstream(ext_seed_out, seed);
      const ExtractorParams params(config.extract.l, m, h_min, block_bits, config.extract.epsilon_log2,
                                   std::move(seed));
      const StreamExtraction result = extract_stream(raw, params, config.extract.method);
      const auto path = or_default(ext_out, config, "extracted.trng");
      write_bitstream(path, result.output, ext_common.framing());
      if (config.io.export_ascii) export_for_external_suites(result.output, stem_of(path));
      json report = to_json(make_rate_report(effective_raw_rate(config), config.extract.l, m));
      report["h_min"] = h_min;
      report["chunks"] = result.chunks;
      report["discarded_bits"] = result.discarded_bits;
      report["extracted_bits"] = result.output.size();
      report["fft_fallbacks"] = result.fft_fallbacks;
      out << report.dump(2) << '\n';
      return kExitOk;
    });
  });

  // test -------------------------------------------------------------------
  Common test_common;
  std::string test_in;
  std::string test_report;
  auto* test = app.add_subcommand("test", "Run the statistical battery on a bit file");
  test_common.attach(*test);
  test->add_option("--in", test_in, "Bit file to test")->required();
  test->add_option("--report", test_report, "Write the JSON report here");
  test->callback([&] {
    status = run_stage(Stage::kTest, err, [&] {
      const PipelineConfig config = test_common.load();
      const BitStream bits = read_bitstream(test_in, test_common.framing());
      BatteryOptions options;
      options.alpha = config.tests.alpha;
      options.n_subsequences = config.tests.n_subsequences;
      options.max_lag = config.tests.max_lag;
      const TestReport report = run_battery(bits, options);
      if (!test_report.empty()) write_file(test_report, to_json(report).dump(2) + "\n");
      if (config.io.export_ascii) export_copies(bits, stem_of(test_in), test_in);
      out << format_battery_table(report);
      return report.passed ? kExitOk : kExitQuality;
    });
  });

  // pipeline ---------------------------------------------------------------
  Common pipe_common;
  std::string pipe_out_dir;
  auto* pipe = app.add_subcommand("pipeline", "Run every stage and keep all artifacts");
  pipe_common.attach(*pipe);
  pipe->add_option("--out-dir", pipe_out_dir, "Artifact directory (default: io.output_dir)");
  pipe->callback([&] {
    status = run_stage(Stage::kConfig, err, [&] {
      PipelineConfig config = pipe_common.load();
      if (!pipe_out_dir.empty()) config.io.output_dir = pipe_out_dir;
      const PipelineResult result = run_pipeline(config, out);
      if (!result.battery.passed) {
        err << "qrng: [test] battery failed; see " << (std::filesystem::path(config.io.output_dir) / "battery.txt")
            << '\n';
        return kExitQuality;
      }
      return kExitOk;
    });
  });

  // export -----------------------------------------------------------------
  Common exp_common;
  std::string exp_in;
  std::string exp_stem;
  auto* exp = app.add_subcommand("export", "Write headerless and ASCII copies for external test suites");
  exp_common.attach(*exp);
  exp->add_option("--in", exp_in, "Bit file to export")->required();
  exp->add_option("--stem", exp_stem, "Output path without extension (default: input path)");
  exp->callback([&] {
    status = run_stage(Stage::kExport, err, [&] {
      const BitStream bits = read_bitstream(exp_in, exp_common.framing());
      const std::filesystem::path stem = exp_stem.empty() ? stem_of(exp_in) : std::filesystem::path(exp_stem);
      export_copies(bits, stem, exp_in);
      out << "wrote " << stem.string() << ".bin and " << stem.string() << ".txt (" << bits.size() << " bits)\n";
      return kExitOk;
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  return status;
}

}  // namespace qrng
