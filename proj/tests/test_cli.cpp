#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "srmq/cli.hpp"
#include "srmq/errors.hpp"
#include "srmq/lqt_oracle.hpp"

using namespace srmq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("srmq_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const fs::path& default_table() {
  static const fs::path path = [] {
    const fs::path p = scratch_dir("table") / "table.txt";
    const RunReport r = cmd_train(Config{}, p);
    EXPECT_EQ(r.exit_code, kExitOk) << r.text;
    return p;
  }();
  return path;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(SRMQ_TOOL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsDescribeTheNominalExperiment) {
  const Config c = parse_config("");
  EXPECT_EQ(c.motor.v_dc, 300.0);
  EXPECT_EQ(c.grid.theta_nodes, 16);
  EXPECT_EQ(c.grid.current_nodes, 8);
  EXPECT_EQ(c.training.tuples, 6);
  EXPECT_EQ(c.training.gamma, 0.9);
  EXPECT_EQ(c.scenario.controller, "scheduled-qlearning");
  EXPECT_FALSE(c.scenario.online_learning);
}

TEST(Config, ParsesSectionsAndEvents) {
  const Config c = parse_config(
      "[motor]\nresistance = 2.2\n[scenario]\nevents = 3000:5.5, 8000:4.5\n"
      "online_learning = on\ncontroller = delta-modulation\n");
  EXPECT_EQ(c.motor.resistance, 2.2);
  ASSERT_EQ(c.scenario.events.size(), 2u);
  EXPECT_EQ(c.scenario.events[1].step, 8000);
  EXPECT_EQ(c.scenario.events[1].amplitude, 4.5);
  EXPECT_TRUE(c.scenario.online_learning);
}

TEST(Config, InlineCommentsAreIgnored) {
  const Config c = parse_config("[motor]\nresistance = 2.5   ; ohm\n[training]\nseed = 4 # fixed\n");
  EXPECT_EQ(c.motor.resistance, 2.5);
  EXPECT_EQ(c.training.seed, 4u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("[motor]\nresistence = 2\n"), ValidationError);
  EXPECT_THROW(parse_config("[engine]\nx = 1\n"), ValidationError);
  EXPECT_THROW(parse_config("[motor]\nresistance = two\n"), ValidationError);
  EXPECT_THROW(parse_config("[grid]\ntheta_nodes = 3.5\n"), ValidationError);
  EXPECT_THROW(parse_config("[training]\ngamma = 1.5\n"), ValidationError);
  EXPECT_THROW(parse_config("[training]\ntuples = 5\n"), ValidationError);
  EXPECT_THROW(parse_config("[scenario]\ncontroller = pid\n"), ValidationError);
  EXPECT_THROW(parse_config("[scenario]\nevents = 100\n"), ValidationError);
  EXPECT_THROW(parse_config("[scenario]\nonline_learning = maybe\n"), ValidationError);
  EXPECT_THROW(parse_config("[motor\n"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ValidationError);
}

TEST(Config, DumpRoundTrips) {
  Config c = parse_config("[motor]\nresistance = 2.2\n[scenario]\nevents = 3000:5.5\nduration = 5000\n");
  apply_seed(c, 77);
  const std::string text = dump_config(c);
  const Config back = parse_config(text);
  EXPECT_EQ(dump_config(back), text);
  EXPECT_EQ(back.training.seed, 77u);
  EXPECT_EQ(back.scenario.seed, 77u);
}

TEST(Config, EffectiveConfigReproducesTheRun) {
  const fs::path dir = scratch_dir("rerun");
  Config c = parse_config("[scenario]\nonline_learning = true\nduration = 5000\nseed = 9\n");
  ASSERT_EQ(cmd_run(c, default_table(), dir / "a", TraceFormat::Csv).exit_code, kExitOk);
  const Config again = load_config(dir / "a" / "effective.ini");
  ASSERT_EQ(cmd_run(again, default_table(), dir / "b", TraceFormat::Csv).exit_code, kExitOk);
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
}

TEST(CmdTrain, DefaultConfigMatchesOracle) {
  const fs::path out = scratch_dir("train") / "t.txt";
  const RunReport r = cmd_train(Config{}, out);
  ASSERT_EQ(r.exit_code, kExitOk) << r.text;
  const json j = json::parse(r.json);
  EXPECT_EQ(j["cores"].size(), 128u);
  EXPECT_LT(j["max_oracle_gap"].get<double>(), 0.01);
  EXPECT_TRUE(fs::exists(out));
  EXPECT_EQ(load_table(out).params_hash, motor_params_hash(MotorParams{}));
}

TEST(CmdTrain, SingleCoreOnConstantSurfaceEqualsOracle) {
  const fs::path dir = scratch_dir("single");
  spit(dir / "flat.csv", "theta_deg\\current_A,0,10\n0,0.009,0.009\n45,0.009,0.009\n");
  Config c = parse_config("[surface]\nfile = flat.csv\n[grid]\ntheta_nodes = 1\ncurrent_nodes = 1\n", dir);
  ASSERT_EQ(cmd_train(c, dir / "t.txt").exit_code, kExitOk);
  const PhaseCoefficients pc = discretize(2.0, 1e-4, 0.009);
  const AugmentedModel m = build_augmented(pc.A, pc.B, 1, 1, 100, 0.001, 0.9);
  const PolicyGain oracle = optimal_gain(are_fixed_point(m).kernel, m);
  const PolicyGain learned = load_table(dir / "t.txt").table.gain(0, 0);
  EXPECT_LT((learned.K - oracle.K).norm(), 1e-3 * (1 + oracle.K.norm()));
}

TEST(CmdTrain, NonConvergenceIsExitThree) {
  Config c = parse_config("[training]\nmax_iterations = 1\ngain_tol = 1e-12\n[grid]\ntheta_nodes = 2\ncurrent_nodes = 1\n");
  const RunReport r = guarded([&] { return cmd_train(c, scratch_dir("noconv") / "t.txt"); });
  EXPECT_EQ(r.exit_code, kExitConvergence);
  EXPECT_NE(r.text.find("node (0, 0)"), std::string::npos) << r.text;
}

TEST(CmdRun, NominalScenarioWritesArtifacts) {
  const fs::path dir = scratch_dir("run");
  const RunReport r = cmd_run(Config{}, default_table(), dir, TraceFormat::Jsonl);
  ASSERT_EQ(r.exit_code, kExitOk) << r.text;
  const json j = json::parse(r.json);
  EXPECT_LT(j["metrics"]["rmse_rel"].get<double>(), 0.02);
  EXPECT_EQ(j["steps"].get<int>(), 12500);
  for (const char* name : {"trace.jsonl", "effective.ini", "metrics.json"}) {
    EXPECT_TRUE(fs::exists(dir / name)) << name;
  }
  EXPECT_FALSE(fs::exists(dir / "table_learned.txt"));
  EXPECT_EQ(json::parse(slurp(dir / "metrics.json")), j);
}

TEST(CmdRun, ReferenceEventTransientResettles) {
  Config c = parse_config("[scenario]\nevents = 5000:5.5\n");
  const RunReport r = cmd_run(c, default_table(), scratch_dir("event"), TraceFormat::Csv);
  ASSERT_EQ(r.exit_code, kExitOk);
  const json j = json::parse(r.json);
  const auto& windows = j["metrics"]["windows"];
  const auto& last = windows[windows.size() - 1];
  EXPECT_EQ(last["amplitude"].get<double>(), 5.5);
  EXPECT_TRUE(last["settled"].get<bool>());
  EXPECT_LT(last["rmse_rel"].get<double>(), 0.02);
}

TEST(CmdRun, CorruptedTableIsValidationError) {
  const fs::path dir = scratch_dir("corrupt");
  std::string text = slurp(default_table());
  spit(dir / "t.txt", text.substr(0, text.size() / 3));
  const RunReport r = guarded([&] { return cmd_run(Config{}, dir / "t.txt", dir / "out", TraceFormat::Csv); });
  EXPECT_EQ(r.exit_code, kExitValidation);
}

TEST(CmdRun, MotorHashMismatchNamesBothHashes) {
  Config c = parse_config("[motor]\nresistance = 2.5\n");
  const RunReport r = guarded([&] {
    return cmd_run(c, default_table(), scratch_dir("hash"), TraceFormat::Csv);
  });
  EXPECT_EQ(r.exit_code, kExitValidation);
  EXPECT_NE(r.text.find("retrain"), std::string::npos) << r.text;
}

TEST(CmdRun, DeltaNeedsNoTable) {
  Config c = parse_config("[scenario]\ncontroller = delta-modulation\n");
  EXPECT_EQ(cmd_run(c, "", scratch_dir("delta"), TraceFormat::Csv).exit_code, kExitOk);
  Config q;
  EXPECT_EQ(guarded([&] { return cmd_run(q, "", scratch_dir("notable"), TraceFormat::Csv); }).exit_code,
            kExitValidation);
}

TEST(CmdRun, SafetyAbortIsExitFour) {
  Config c = parse_config("[scenario]\nsafety_factor = 0.5\n");
  const RunReport r = cmd_run(c, default_table(), scratch_dir("abort"), TraceFormat::Csv);
  EXPECT_EQ(r.exit_code, kExitSafety);
  EXPECT_NE(r.text.find("safety abort"), std::string::npos);
}

TEST(CmdCompare, ScheduledRippleWellBelowDelta) {
  const fs::path dir = scratch_dir("compare");
  const RunReport r = cmd_compare(Config{}, default_table(), dir, TraceFormat::Csv);
  ASSERT_EQ(r.exit_code, kExitOk);
  const json j = json::parse(r.json);
  EXPECT_LT(j["ripple_ratio"].get<double>(), 0.25);
  EXPECT_TRUE(fs::exists(dir / "trace_scheduled.csv"));
  EXPECT_TRUE(fs::exists(dir / "trace_delta.csv"));
  EXPECT_TRUE(fs::exists(dir / "compare.json"));
}

TEST(CmdCompare, ZeroDurationIsValidationError) {
  EXPECT_THROW(parse_config("[scenario]\nduration = 0\n"), ValidationError);
}

TEST(CmdCompare, PerturbedPlantWithLearningStillTracks) {
  Config c = parse_config("[scenario]\nresistance_scale = 1.1\nonline_learning = true\n");
  const RunReport r = cmd_compare(c, default_table(), scratch_dir("perturbed"), TraceFormat::Csv);
  ASSERT_EQ(r.exit_code, kExitOk);
  const json j = json::parse(r.json);
  EXPECT_LT(j["scheduled"]["metrics"]["rmse_rel"].get<double>(), 0.02);
  EXPECT_LT(j["scheduled"]["metrics"]["rmse"].get<double>(), j["delta"]["metrics"]["rmse"].get<double>());
}

TEST(CmdOracle, AlignedNodeAndPolicyIterationAgree) {
  const RunReport r = cmd_oracle(Config{});
  const json j = json::parse(r.json);
  EXPECT_EQ(j["nodes"].size(), 128u);
  const auto& n0 = j["nodes"][0];
  EXPECT_DOUBLE_EQ(n0["inductance_H"].get<double>(), 0.016);
  EXPECT_NEAR(n0["K"][0].get<double>(), 120.0, 18.0);
  EXPECT_NEAR(n0["K"][1].get<double>(), -122.0, 18.3);
  EXPECT_LT(j["max_pi_gap"].get<double>(), 1e-8);
}

TEST(CmdOracle, ZeroTrackingWeightGivesZeroGain) {
  const RunReport r = cmd_oracle(parse_config("[training]\nQ = 0\n[grid]\ntheta_nodes = 2\ncurrent_nodes = 2\n"));
  const json j = json::parse(r.json);
  for (const auto& n : j["nodes"]) {
    EXPECT_NEAR(n["K"][0].get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(n["K"][1].get<double>(), 0.0, 1e-12);
  }
}

TEST(Executable, ExitCodes) {
  const fs::path dir = scratch_dir("exe");
  const std::string table = default_table().string();
  EXPECT_EQ(run_tool("oracle"), 0);
  EXPECT_EQ(run_tool("--version-does-not-exist"), 2);
  spit(dir / "bad.ini", "[motor]\nnonsense = 1\n");
  EXPECT_EQ(run_tool("oracle --config " + (dir / "bad.ini").string()), 2);
  spit(dir / "noconv.ini", "[training]\nmax_iterations = 1\ngain_tol = 1e-12\n");
  EXPECT_EQ(run_tool("train --config " + (dir / "noconv.ini").string() + " --out " +
                     (dir / "t.txt").string()),
            3);
  spit(dir / "abort.ini", "[scenario]\nsafety_factor = 0.5\n");
  EXPECT_EQ(run_tool("run --config " + (dir / "abort.ini").string() + " --table " + table +
                     " --out " + (dir / "abort").string()),
            4);
  EXPECT_EQ(run_tool("run --table " + table + " --out " + (dir / "ok").string() + " --format xml"), 2);
}

TEST(Executable, SameSeedSameTrace) {
  const fs::path dir = scratch_dir("seed");
  const std::string table = default_table().string();
  spit(dir / "learn.ini", "[scenario]\nonline_learning = true\nduration = 3000\n");
  const std::string base = "run --config " + (dir / "learn.ini").string() + " --table " + table;
  ASSERT_EQ(run_tool(base + " --seed 5 --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_tool(base + " --seed 5 --out " + (dir / "b").string()), 0);
  ASSERT_EQ(run_tool(base + " --seed 6 --out " + (dir / "c").string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
  EXPECT_NE(slurp(dir / "a" / "trace.csv"), slurp(dir / "c" / "trace.csv"));
}
