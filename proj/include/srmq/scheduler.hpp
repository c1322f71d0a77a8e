#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "srmq/control_types.hpp"
#include "srmq/plant.hpp"
#include "srmq/qlearn.hpp"

namespace srmq {

/// Node layout of a Q-core table.
///
/// Theta nodes are distinct angles inside one rotor pitch and wrap around:
/// the cell above the last node closes onto the first node plus one pitch.
/// Current nodes are clamped at both ends (no extrapolation).
struct GridSpec {
  std::vector<double> theta_nodes;
  std::vector<double> current_nodes;
  double pitch = 45.0;

  /// `theta_count` evenly spaced nodes from 0 and `current_count` nodes on
  /// [0, i_max] (a single current node sits at 0).
  static GridSpec uniform(double pitch, int theta_count, int current_count,
                          double i_max);
  void validate() const;
  std::size_t rows() const { return theta_nodes.size(); }
  std::size_t cols() const { return current_nodes.size(); }
};

/// Enclosing cell of a query: lower corner (row = theta index, col = current
/// index), upper neighbours, and normalized offsets in [0, 1).
struct CellLocation {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t row_up = 0;
  std::size_t col_up = 0;
  double l1 = 0.0;  // theta offset
  double l2 = 0.0;  // current offset
};

struct ScheduledGain {
  PolicyGain gain;
  CellLocation cell;
  bool fallback = false;  // scheduled G_uu <= 0; nearest core's gain used
};

struct OnlineConfig {
  double gain_clamp = 0.05;    // max relative gain change per update
  double trust_region = 0.25;  // max relative distance from the trained gain
};

struct UpdateOutcome {
  std::size_t row = 0;
  std::size_t col = 0;
  bool applied = false;       // false if the candidate had G_uu <= 0
  bool rate_limited = false;
  double gain_change = 0.0;   // ||K_new - K_old|| after limiting
};

/// Grid of trained Q-kernels with cached greedy gains and per-core RLS state.
class QCoreTable {
 public:
  /// `cores` is row-major over (theta, current). Gains are derived from the
  /// cores; every core needs G_uu > 0.
  QCoreTable(GridSpec grid, std::vector<QKernel> cores, double gamma, double tau);

  const GridSpec& grid() const { return grid_; }
  double gamma() const { return gamma_; }
  double tau() const { return tau_; }

  const QKernel& core(std::size_t row, std::size_t col) const { return cores_[index(row, col)]; }
  const PolicyGain& gain(std::size_t row, std::size_t col) const { return gains_[index(row, col)]; }
  const RlsState& rls(std::size_t row, std::size_t col) const { return rls_[index(row, col)]; }
  /// Gain the core had when it was trained, loaded or last replaced.
  const PolicyGain& anchor_gain(std::size_t row, std::size_t col) const {
    return anchors_[index(row, col)];
  }

  CellLocation locate(double theta, double current) const;
  /// Corner of the enclosing cell closest in normalized distance; ties go to
  /// the lower index.
  std::pair<std::size_t, std::size_t> nearest_node(double theta, double current) const;
  const QKernel& nearest_core(double theta, double current) const;
  /// Bilinear blend of the four corner kernels.
  QKernel scheduled_q(double theta, double current) const;
  ScheduledGain scheduled_gain(double theta, double current) const;

  /// One RLS step on the nearest core, then refresh its kernel and gain. The
  /// step is shrunk so the gain moves at most `gain_clamp` per update and
  /// stays within `trust_region` of the anchor gain; steady operation alone
  /// does not excite every direction of the kernel, and unexcited directions
  /// would otherwise wander.
  UpdateOutcome update_core_online(const DataTuple& tuple, double theta,
                                   double current, const OnlineConfig& config = {});

  /// Replaces one core (and resets its RLS state).
  void set_core(std::size_t row, std::size_t col, const QKernel& kernel);

 private:
  std::size_t index(std::size_t row, std::size_t col) const { return row * grid_.cols() + col; }

  GridSpec grid_;
  double gamma_;
  double tau_;
  std::vector<QKernel> cores_;
  std::vector<PolicyGain> gains_;
  std::vector<PolicyGain> anchors_;
  std::vector<RlsState> rls_;
};

/// Locally linear plant with the inductance frozen at one operating point,
/// presented to the learner as a black box.
class FrozenPhaseEnvironment : public Environment {
 public:
  FrozenPhaseEnvironment(double A, double B, double F, double v_limit,
                         double reference_level, double initial_current = 0.0);

  AugState reset() override;
  Observation step(double u) override;

 private:
  double A_, B_, F_, v_limit_, reference_level_, initial_current_;
  AugState X_ = AugState::Zero();
};

struct TableTrainConfig {
  double C = 1.0;
  double F = 1.0;
  double Q = 100.0;
  double R_u = 0.001;
  double gamma = 0.9;
  PolicyGain K0{100.0, -100.0};
  TrainConfig learner;            // cost is filled from C, Q, R_u, gamma
  double reference_level = 4.0;   // r held during training trajectories
  double tau = 1e6;
  unsigned threads = 0;           // 0 = hardware concurrency
};

struct CoreReport {
  std::size_t row = 0;
  std::size_t col = 0;
  double theta = 0.0;
  double current = 0.0;
  double inductance = 0.0;
  int iterations = 0;
  PolicyGain gain;
  PolicyGain oracle_gain;
  double oracle_gap = 0.0;  // ||K - K_are|| / ||K_are||
  std::vector<PolicyGain> history;  // K0, K1, ... of the policy iteration
};

struct TrainedTable {
  QCoreTable table;
  std::vector<CoreReport> reports;
};

/// Trains one core per node against the plant frozen at that node's
/// inductance, and compares each gain with the Riccati solution.
/// Throws ConvergenceError naming every node that failed.
TrainedTable train_table(const MotorParams& motor, const InductanceSurface& surface,
                         const GridSpec& grid, const TableTrainConfig& config);

/// 64-bit FNV-1a over the canonical text of the motor parameters.
std::uint64_t motor_params_hash(const MotorParams& motor);

struct LoadedTable {
  QCoreTable table;
  std::uint64_t params_hash = 0;
};

/// Text format, version 1: header lines (magic, params hash, pitch, gamma, tau,
/// theta nodes, current nodes) followed by one line per core in row-major
/// order holding the six half-vectorized G entries. Numbers use shortest
/// round-trip formatting so save/load is bit-exact.
void save_table(const QCoreTable& table, std::uint64_t params_hash,
                const std::filesystem::path& path);
LoadedTable load_table(const std::filesystem::path& path);

}  // namespace srmq
