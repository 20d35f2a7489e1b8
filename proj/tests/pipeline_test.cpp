// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/pipeline.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "qrng/commands.hpp"

namespace qrng {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qrng_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qrng");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(QRNG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small but complete run: ~3 M pulses, 10 sub-sequences.
std::vector<std::string> small_run(const fs::path& dir) {
  return {"pipeline",
          "--set",
          "n_pulses=3000000",
          "--set",
          "sweep.pulses_per_point=20000",
          "--set",
          "tests.n_subsequences=10",
          "--out-dir",
          dir.string()};
}

TEST(Config, DefaultsRoundTrip) {
  const PipelineConfig defaults;
  EXPECT_EQ(defaults.source.pulse_freq, 50e6);
  EXPECT_EQ(defaults.source.u_high, 49.40);
  EXPECT_EQ(defaults.extract.l, 3000u);
  EXPECT_EQ(defaults.extract.epsilon_log2, -100);
  EXPECT_EQ(defaults.tests.alpha, 0.01);
  EXPECT_EQ(defaults.sweep.voltages.size(), 26u);
  EXPECT_EQ(to_json(config_from_json(to_json(defaults))).dump(), to_json(defaults).dump());
  EXPECT_EQ(to_json(config_from_json(nlohmann::json::object())).dump(), to_json(defaults).dump());
}

TEST(Config, RejectsUnknownAndMistypedKeys) {
  EXPECT_THROW(config_from_json(nlohmann::json{{"sorce", nlohmann::json::object()}}), Error);
  EXPECT_THROW(config_from_json(nlohmann::json{{"extract", {{"l", "big"}}}}), Error);
  EXPECT_THROW(config_from_json(nlohmann::json{{"extract", {{"l", -5}}}}), Error);
  EXPECT_THROW(config_from_json(nlohmann::json{{"extract", {{"h0", "log10"}}}}), Error);
  EXPECT_THROW(config_from_json(nlohmann::json{{"tests", {{"alpha", 1.5}}}}), Error);
  EXPECT_THROW(config_from_json(nlohmann::json{{"source", {{"model", {{"C", 1.0}}}}}}), Error);
}

TEST(Config, Overrides) {
  nlohmann::json doc = nlohmann::json::object();
  apply_override(doc, "extract.sign=add");
  apply_override(doc, "extract.l=4096");
  apply_override(doc, "source.model.V0=49.1");
  apply_override(doc, "io.output_dir=some/dir");
  apply_override(doc, "sweep.voltages=[49.3,49.4,49.5,49.6,49.7]");
  const PipelineConfig c = config_from_json(doc);
  EXPECT_EQ(c.extract.sizing.sign, SecuritySign::kAdd);
  EXPECT_EQ(c.extract.l, 4096u);
  EXPECT_EQ(c.source.model.critical_voltage(), 49.1);
  EXPECT_EQ(c.io.output_dir, "some/dir");
  EXPECT_EQ(c.sweep.voltages.size(), 5u);
  EXPECT_THROW(apply_override(doc, "novalue"), Error);
  EXPECT_THROW(apply_override(doc, "=3"), Error);
  EXPECT_THROW(apply_override(doc, "extract.l.deeper=3"), Error);
}

TEST(Rates, ReportConsistency) {
  const RateReport r = make_rate_report(20e6, 3000, 1129);
  EXPECT_DOUBLE_EQ(r.final_rate / r.raw_rate, 1129.0 / 3000.0);
  EXPECT_DOUBLE_EQ(r.extraction_ratio, 1129.0 / 3000.0);
  EXPECT_NEAR(r.final_rate, 7.526667e6, 1.0);
  const RateReport literal = make_rate_report(20e6, 3000, 1529);
  EXPECT_NEAR(literal.final_rate, 10.193333e6, 1.0);
  EXPECT_LT(r.final_rate, 8.3e6);
  EXPECT_GT(literal.final_rate, 8.3e6);
}

TEST(Rates, CountingRateAtHalfProbability) {
  const SourceConfig c;  // 50 MHz, 49.40 V, thermal noise only
  const BitStream raw = simulate_pulse_train(c, 50'000'000);
  const double rate = counting_rate(raw, c.pulse_freq);
  EXPECT_NEAR(rate, 2.5e7, 3.0 * std::sqrt(5e7 * 0.25));
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorCode::kIo), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kInvalidArgument), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kFormat), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kInsufficientData), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kOutputTooShort), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kFitFailure), 3);
}

TEST(Cli, SimulateEmptyRun) {
  const auto dir = scratch("empty");
  const auto out = (dir / "raw.trng").string();
  const auto r = cli({"simulate", "--pulses", "0", "--out", out});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(fs::file_size(out), kHeaderSize);
  EXPECT_TRUE(read_bitstream(out).empty());
}

TEST(Cli, SimulateHeaderlessAndAscii) {
  const auto dir = scratch("sim");
  const auto out = (dir / "raw.trng").string();
  const auto r = cli({"simulate", "--pulses", "8000", "--out", out, "--headerless", "--export-ascii"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(fs::file_size(out), 1000u);
  EXPECT_EQ(fs::file_size(dir / "raw.txt"), 8000u);
  EXPECT_EQ(read_bitstream(dir / "raw.bin", Framing::kHeaderless), read_bitstream(out, Framing::kHeaderless));
}

TEST(Cli, UsageAndIoErrorsExitTwo) {
  EXPECT_EQ(cli({"simulate", "--pulses", "10", "--out", "/nonexistent/dir/raw.trng"}).code, 2);
  EXPECT_EQ(cli({"entropy", "--in", "/nonexistent/raw.trng"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"simulate", "--set", "source.bogus=1"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--config", "/nonexistent/config.json"}).code, 2);
  const auto r = cli({"extract", "--in", "/nonexistent/raw.trng"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/nonexistent/raw.trng"), std::string::npos);
  EXPECT_NE(r.err.find("[extract]"), std::string::npos);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli({"--help"}).code, 0); }

TEST(Cli, ShortPipelineFailsInTestStage) {
  const auto dir = scratch("short");
  const auto r = cli({"pipeline", "--set", "n_pulses=10000", "--set", "sweep.pulses_per_point=5000", "--out-dir",
                      dir.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("[test]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("insufficient"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(dir / "extracted.trng"));
  EXPECT_FALSE(fs::exists(dir / "battery.json"));
}

TEST(Cli, DegenerateSourceFailsInEntropyStage) {
  const auto dir = scratch("dead");
  const auto r = cli({"pipeline", "--set", "source.u_high=49.0", "--set", "source.thermal_rate=0", "--set",
                      "n_pulses=100000", "--set", "sweep.voltages=[49.3,49.35,49.4,49.45,49.5,49.55]", "--set",
                      "sweep.pulses_per_point=5000", "--out-dir", dir.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("[entropy]"), std::string::npos) << r.err;
}

TEST(Cli, PipelineWritesAllArtifactsAndPasses) {
  const auto dir = scratch("full");
  const auto r = cli(small_run(dir));
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  for (const char* name : {"raw.trng", "sweep.csv", "fit.json", "fit.txt", "entropy.json", "seed.trng",
                           "extracted.trng", "rate.json", "battery.json", "battery.txt"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  const auto rate = nlohmann::json::parse(slurp(dir / "rate.json"));
  EXPECT_GE(rate["final_rate"].get<double>(), 7e6);
  EXPECT_LE(rate["final_rate"].get<double>(), 11e6);
  EXPECT_EQ(rate["l"], 3000);
  const auto battery = nlohmann::json::parse(slurp(dir / "battery.json"));
  EXPECT_TRUE(battery["passed"].get<bool>());
}

TEST(Cli, AddedSecurityTermWithinBand) {
  const auto dir = scratch("literal");
  auto args = small_run(dir);
  args.insert(args.end(), {"--set", "extract.sign=add"});
  const auto r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rate = nlohmann::json::parse(slurp(dir / "rate.json"));
  EXPECT_GE(rate["final_rate"].get<double>(), 7e6);
  EXPECT_LE(rate["final_rate"].get<double>(), 11e6);
  EXPECT_GT(rate["m"].get<int>(), 1400);
}

TEST(Cli, PipelineIsDeterministic) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  ASSERT_EQ(cli(small_run(a)).code, 0);
  setenv("QRNG_THREADS", "3", 1);
  ASSERT_EQ(cli(small_run(b)).code, 0);
  unsetenv("QRNG_THREADS");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path().filename();
  }
  EXPECT_EQ(files, 10u);
}

TEST(Cli, StagesComposeOnFiles) {
  const auto dir = scratch("stages");
  const auto raw = (dir / "raw.trng").string();
  ASSERT_EQ(cli({"simulate", "--pulses", "3000000", "--out", raw}).code, 0);
  const auto ent = cli({"entropy", "--in", raw});
  ASSERT_EQ(ent.code, 0) << ent.err;
  EXPECT_NE(ent.out.find("h_min"), std::string::npos);
  const auto ext_path = (dir / "out.trng").string();
  const auto ext = cli({"extract", "--in", raw, "--out", ext_path, "--seed-out", (dir / "seed.trng").string(),
                        "--set", "extract.method=fft"});
  ASSERT_EQ(ext.code, 0) << ext.err;
  EXPECT_NE(ext.out.find("final_rate"), std::string::npos);
  const auto test = cli({"test", "--in", ext_path, "--set", "tests.n_subsequences=10", "--report",
                         (dir / "battery.json").string()});
  EXPECT_EQ(test.code, 0) << test.out << test.err;
  EXPECT_NE(test.out.find("Success"), std::string::npos);
  const auto raw_test = cli({"test", "--in", raw, "--set", "tests.n_subsequences=10"});
  EXPECT_EQ(raw_test.code, 3);
  const auto exported = cli({"export", "--in", ext_path});
  EXPECT_EQ(exported.code, 0) << exported.err;
  EXPECT_TRUE(fs::exists(dir / "out.bin"));
  EXPECT_TRUE(fs::exists(dir / "out.txt"));
  EXPECT_EQ(cli({"export", "--in", (dir / "out.bin").string(), "--headerless"}).code, 2);
  const auto cal = cli({"calibrate", "--out-csv", (dir / "sweep.csv").string(), "--out-fit",
                        (dir / "fit.json").string(), "--set", "sweep.pulses_per_point=20000"});
  EXPECT_EQ(cal.code, 0) << cal.err;
  EXPECT_EQ(cli({"calibrate", "--in-csv", (dir / "sweep.csv").string(), "--out-fit", (dir / "fit2.json").string()})
                .code,
            0);
  EXPECT_EQ(slurp(dir / "fit.json"), slurp(dir / "fit2.json"));
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("simulate --pulses 0 --out " + (dir / "e.trng").string()), 0);
  EXPECT_EQ(run_binary("simulate --pulses 10 --out /nonexistent/dir/raw.trng"), 2);
  EXPECT_EQ(run_binary("pipeline --set n_pulses=10000 --set sweep.pulses_per_point=5000 --out-dir " +
                       (dir / "short").string()),
            3);
}

}  // namespace
}  // namespace qrng
