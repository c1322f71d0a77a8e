#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srmq/control_types.hpp"
#include "srmq/plant.hpp"
#include "srmq/scheduler.hpp"

namespace srmq {

enum class ControllerKind { ScheduledQ, SingleCore, DeltaModulation };

const char* to_string(ControllerKind kind);
/// Accepts "scheduled-qlearning", "single-qcore", "delta-modulation".
ControllerKind parse_controller(const std::string& name);

struct Scenario {
  MotorParams motor;
  InductanceSurface surface = default_surface(MotorParams{});
  ReferenceProfile reference;
  ControllerKind controller = ControllerKind::ScheduledQ;
  std::int64_t duration = 12500;   // steps
  std::uint64_t seed = 1;
  bool online_learning = false;
  double dither = 2.0;             // V, uniform on [-dither, dither] while learning
  double resistance_scale = 1.0;   // simulated plant R relative to motor.resistance
  double start_theta = 0.0;        // deg
  double delta_band = 0.0;         // A, hysteresis half-band for the baseline
  std::size_t core_row = 0;        // fixed core for SingleCore
  std::size_t core_col = 0;
  TrackingCost cost = make_tracking_cost(1.0, 100.0, 0.001, 0.9);
  OnlineConfig online;
  double safety_factor = 3.0;      // abort when x > safety_factor * i_nominal
  int skip_cycles = 1;             // electrical cycles excluded from metrics

  void validate() const;
  double safety_current() const { return safety_factor * motor.i_nominal; }
};

struct TraceRecord {
  std::int64_t k = 0;
  double t = 0.0;
  double theta = 0.0;
  double r = 0.0;
  double x = 0.0;
  double u = 0.0;
  double K1 = 0.0;
  double K2 = 0.0;
  int cell_row = -1;
  int cell_col = -1;
  double cost = 0.0;

  bool operator==(const TraceRecord&) const = default;
};

struct SimTrace {
  std::vector<TraceRecord> records;
  bool aborted = false;
  std::string diagnostic;
  std::int64_t fallback_count = 0;    // scheduled G_uu <= 0 events
  std::int64_t online_updates = 0;
  std::int64_t rate_limited_updates = 0;
};

/// Per-sample baseline: +V_dc below the reference, -V_dc above, 0 on it.
double delta_modulation_step(double x, double r, double v_dc);

/// Hysteresis variant: holds `previous_u` while |x - r| <= band.
double delta_modulation_step(double x, double r, double v_dc, double band,
                             double previous_u);

/// Fixed-step closed loop. Scheduled and single-core controllers read
/// `table` (updated in place when online learning is on). A safety abort
/// returns the partial trace with `aborted` set.
SimTrace run_closed_loop(const Scenario& scenario, QCoreTable& table);
/// Baseline-only overload; throws ValidationError for table controllers.
SimTrace run_closed_loop(const Scenario& scenario);

/// One conduction window (one electrical cycle).
struct WindowMetrics {
  std::int64_t first_k = 0;
  std::int64_t samples = 0;
  double amplitude = 0.0;         // reference at the end of the window
  double rmse = 0.0;              // A
  double rmse_rel = 0.0;          // error / amplitude, RMS
  double ripple = 0.0;            // A, peak-to-peak after settling
  std::int64_t settling_steps = 0;
  bool settled = false;
  double mean_dk = 0.0;           // mean ||K - K_prev window|| at equal offsets
};

struct Metrics {
  double rmse = 0.0;
  double rmse_rel = 0.0;
  double ripple = 0.0;            // max over evaluated windows
  double mean_settling_steps = 0.0;
  double final_mean_dk = 0.0;
  std::int64_t evaluated_windows = 0;
  std::vector<WindowMetrics> windows;  // every window, including skipped ones
};

/// Tracking metrics over conduction windows, skipping the first
/// `scenario.skip_cycles` windows in the aggregates. Samples where the
/// reference jumps are excluded: the current there was fixed one step before
/// the new reference existed. Settling is the number of samples after the last
/// reference change until |x - r| stays within 5 % of the amplitude; a window
/// whose settled tail is shorter than max(10, segment/10) samples counts as
/// unsettled and its ripple spans the whole segment.
/// Throws ValidationError if the trace has no conduction window.
Metrics compute_metrics(const SimTrace& trace, const Scenario& scenario);

enum class TraceFormat { Csv, Jsonl };
TraceFormat parse_trace_format(const std::string& name);

/// CSV columns: k,t_s,theta_deg,r_A,x_A,u_V,K1,K2,cell_row,cell_col,cost.
void export_trace(const SimTrace& trace, const std::filesystem::path& path,
                  TraceFormat format);
/// Parses a file written by export_trace back into records.
std::vector<TraceRecord> import_trace(const std::filesystem::path& path,
                                      TraceFormat format);

}  // namespace srmq
