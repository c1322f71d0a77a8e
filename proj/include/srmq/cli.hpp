#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "srmq/plant.hpp"
#include "srmq/scheduler.hpp"
#include "srmq/sim.hpp"

namespace srmq {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitConvergence = 3,
  kExitSafety = 4,
};

struct GridConfig {
  int theta_nodes = 16;
  int current_nodes = 8;
  double i_max = 7.0;  // A
};

struct TrainingConfig {
  double gamma = 0.9;
  double Q = 100.0;
  double R_u = 0.001;
  double C = 1.0;
  double F = 1.0;
  double K0_x = 100.0;
  double K0_r = -100.0;
  double tau = 1e6;
  double dither_fraction = 0.05;  // of v_dc
  int tuples = 6;
  double gain_tol = 1e-4;
  int max_iterations = 100;
  double safety_factor = 3.0;     // of i_nominal
  double reference_level = 4.0;  // A
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct ScenarioConfig {
  std::string controller = "scheduled-qlearning";
  std::int64_t duration = 12500;
  double amplitude = 4.0;
  double theta_on = 22.5;
  double theta_off = 40.5;
  std::vector<StepEvent> events;
  bool online_learning = false;
  double dither_v = 2.0;
  double resistance_scale = 1.0;
  double start_theta = 0.0;
  double delta_band = 0.0;
  int core_row = 0;
  int core_col = 0;
  double gain_clamp = 0.05;
  double trust_region = 0.25;
  double safety_factor = 3.0;
  int skip_cycles = 1;
  std::uint64_t seed = 1;
};

/// Everything a command needs. Defaults reproduce the 60 RPM, 4 A pulse
/// experiment with Q = 100, R = 0.001, gamma = 0.9.
struct Config {
  MotorParams motor;
  AnalyticSurface surface;
  std::optional<std::filesystem::path> surface_file;
  GridConfig grid;
  TrainingConfig training;
  ScenarioConfig scenario;

  /// Module-level checks; throws ValidationError.
  void validate() const;
};

/// Parses `key = value` lines under [motor], [surface], [grid], [training]
/// and [scenario]. Unknown sections or keys are errors. Relative surface
/// file paths resolve against `base_dir`.
Config parse_config(const std::string& text,
                    const std::filesystem::path& base_dir = ".");
Config load_config(const std::filesystem::path& path);
/// Complete effective configuration; parse_config(dump_config(c)) == c.
std::string dump_config(const Config& config);
/// Overrides both the training and the scenario seed.
void apply_seed(Config& config, std::uint64_t seed);

InductanceSurface build_surface(const Config& config);
GridSpec build_grid(const Config& config);
TableTrainConfig build_train_config(const Config& config);
Scenario build_scenario(const Config& config, const InductanceSurface& surface);

struct RunReport {
  int exit_code = kExitOk;
  std::string text;   // human-readable
  std::string json;   // one JSON document
  std::vector<std::filesystem::path> artifacts;
};

RunReport cmd_train(const Config& config, const std::filesystem::path& table_out);
RunReport cmd_run(const Config& config, const std::filesystem::path& table_path,
                  const std::filesystem::path& out_dir, TraceFormat format);
RunReport cmd_compare(const Config& config, const std::filesystem::path& table_path,
                      const std::filesystem::path& out_dir, TraceFormat format);
RunReport cmd_oracle(const Config& config);

/// Runs `body`, turning library exceptions into a report with the matching
/// exit code and the message in `text`.
RunReport guarded(const std::function<RunReport()>& body);

}  // namespace srmq
