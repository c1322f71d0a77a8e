#include "srmq/scheduler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "srmq/errors.hpp"
#include "srmq/lqt_oracle.hpp"

namespace srmq {

GridSpec GridSpec::uniform(double pitch, int theta_count, int current_count,
                           double i_max) {
  if (theta_count < 1 || current_count < 1 || !(pitch > 0) || !(i_max > 0)) {
    throw ValidationError("grid: need counts >= 1, pitch > 0, i_max > 0");
  }
  GridSpec spec;
  spec.pitch = pitch;
  for (int t = 0; t < theta_count; ++t) spec.theta_nodes.push_back(pitch * t / theta_count);
  if (current_count == 1) {
    spec.current_nodes.push_back(0.0);
  } else {
    for (int c = 0; c < current_count; ++c) {
      spec.current_nodes.push_back(i_max * c / (current_count - 1));
    }
  }
  return spec;
}

void GridSpec::validate() const {
  auto ascending = [](const std::vector<double>& v) {
    for (std::size_t n = 0; n < v.size(); ++n) {
      if (!std::isfinite(v[n]) || (n > 0 && !(v[n] > v[n - 1]))) return false;
    }
    return !v.empty();
  };
  if (!(pitch > 0) || !ascending(theta_nodes) || !ascending(current_nodes)) {
    throw ValidationError("grid: nodes must be non-empty, finite and strictly ascending");
  }
  if (theta_nodes.back() - theta_nodes.front() >= pitch) {
    throw ValidationError("grid: theta nodes must lie within one pitch");
  }
}

QCoreTable::QCoreTable(GridSpec grid, std::vector<QKernel> cores, double gamma,
                       double tau)
    : grid_(std::move(grid)), gamma_(gamma), tau_(tau), cores_(std::move(cores)) {
  grid_.validate();
  if (cores_.size() != grid_.rows() * grid_.cols()) {
    throw ValidationError("table: core count does not match grid shape");
  }
  if (!(gamma_ > 0 && gamma_ <= 1) || !(tau_ > 0)) {
    throw ValidationError("table: need gamma in (0, 1] and tau > 0");
  }
  gains_.reserve(cores_.size());
  rls_.reserve(cores_.size());
  for (const auto& core : cores_) {
    gains_.push_back(policy_improvement(core));
    rls_.push_back(RlsState::init(core, tau_));
  }
  anchors_ = gains_;
}

CellLocation QCoreTable::locate(double theta, double current) const {
  const auto& tn = grid_.theta_nodes;
  const auto& cn = grid_.current_nodes;
  CellLocation cell;

  const double th = wrap_angle(theta, grid_.pitch, tn.front());
  auto t_it = std::upper_bound(tn.begin(), tn.end(), th);
  cell.row = std::size_t(t_it - tn.begin()) - 1;
  cell.row_up = (cell.row + 1) % tn.size();
  const double th_hi = cell.row + 1 < tn.size() ? tn[cell.row + 1] : tn.front() + grid_.pitch;
  cell.l1 = (th - tn[cell.row]) / (th_hi - tn[cell.row]);
  if (cell.l1 >= 1.0) cell.l1 = std::nextafter(1.0, 0.0);

  const double i = std::clamp(current, cn.front(), cn.back());
  auto c_it = std::upper_bound(cn.begin(), cn.end(), i);
  cell.col = std::size_t(c_it - cn.begin()) - 1;
  cell.col_up = std::min(cell.col + 1, cn.size() - 1);
  cell.l2 = cell.col_up == cell.col ? 0.0 : (i - cn[cell.col]) / (cn[cell.col_up] - cn[cell.col]);
  return cell;
}

std::pair<std::size_t, std::size_t> QCoreTable::nearest_node(double theta,
                                                             double current) const {
  const CellLocation cell = locate(theta, current);
  return {cell.l1 > 0.5 ? cell.row_up : cell.row, cell.l2 > 0.5 ? cell.col_up : cell.col};
}

const QKernel& QCoreTable::nearest_core(double theta, double current) const {
  const auto [row, col] = nearest_node(theta, current);
  return core(row, col);
}

QKernel QCoreTable::scheduled_q(double theta, double current) const {
  const CellLocation c = locate(theta, current);
  const double w11 = (1 - c.l2) * (1 - c.l1);
  const double w12 = (1 - c.l2) * c.l1;
  const double w21 = c.l2 * (1 - c.l1);
  const double w22 = c.l2 * c.l1;
  QKernel out;
  out.G = w11 * core(c.row, c.col).G + w12 * core(c.row_up, c.col).G +
          w21 * core(c.row, c.col_up).G + w22 * core(c.row_up, c.col_up).G;
  return out;
}

ScheduledGain QCoreTable::scheduled_gain(double theta, double current) const {
  ScheduledGain out;
  out.cell = locate(theta, current);
  const QKernel blended = scheduled_q(theta, current);
  if (blended.G_uu() > 0) {
    out.gain = policy_improvement(blended);
  } else {
    const auto [row, col] = nearest_node(theta, current);
    out.gain = gain(row, col);
    out.fallback = true;
  }
  return out;
}

UpdateOutcome QCoreTable::update_core_online(const DataTuple& tuple, double theta,
                                             double current,
                                             const OnlineConfig& config) {
  UpdateOutcome out;
  std::tie(out.row, out.col) = nearest_node(theta, current);
  const std::size_t n = index(out.row, out.col);

  const PolicyGain& old_gain = gains_[n];
  const PolicyGain& anchor = anchors_[n];
  const double step_limit = config.gain_clamp * std::max(old_gain.K.norm(), 1.0);
  const double trust_limit = std::max(config.trust_region * std::max(anchor.K.norm(), 1.0),
                                      (old_gain.K - anchor.K).norm());

  const RlsState full = rls_update(rls_[n], bellman_row(tuple, gamma_), tuple.stage_cost);
  RlsState next = full;
  QKernel candidate;
  PolicyGain new_gain;
  double change = 0.0;
  // K is not linear in g, so the step is halved until the gain fits both limits.
  double alpha = 1.0;
  bool fits = false;
  int attempt = 0;
  for (; attempt < 60; ++attempt) {
    next.g = rls_[n].g + alpha * (full.g - rls_[n].g);
    candidate = QKernel::from_half_vec(next.g);
    if (candidate.G_uu() > 0) {
      new_gain = policy_improvement(candidate);
      change = (new_gain.K - old_gain.K).norm();
      fits = change <= step_limit && (new_gain.K - anchor.K).norm() <= trust_limit;
      if (fits) break;
      alpha = attempt == 0 && change > step_limit ? step_limit / change : 0.5 * alpha;
    } else {
      if (attempt == 0) return out;  // the data itself says G_uu <= 0
      alpha *= 0.5;
    }
  }
  if (!fits) return out;
  out.rate_limited = attempt > 0;
  rls_[n] = next;
  cores_[n] = candidate;
  gains_[n] = new_gain;
  out.applied = true;
  out.gain_change = change;
  return out;
}

void QCoreTable::set_core(std::size_t row, std::size_t col, const QKernel& kernel) {
  const std::size_t n = index(row, col);
  gains_[n] = policy_improvement(kernel);
  anchors_[n] = gains_[n];
  cores_[n] = kernel;
  rls_[n] = RlsState::init(kernel, tau_);
}

FrozenPhaseEnvironment::FrozenPhaseEnvironment(double A, double B, double F,
                                               double v_limit, double reference_level,
                                               double initial_current)
    : A_(A), B_(B), F_(F), v_limit_(v_limit), reference_level_(reference_level),
      initial_current_(initial_current) {}

AugState FrozenPhaseEnvironment::reset() {
  X_ = AugState(initial_current_, reference_level_);
  return X_;
}

Environment::Observation FrozenPhaseEnvironment::step(double u) {
  Observation obs;
  obs.applied_u = std::clamp(u, -v_limit_, v_limit_);
  X_ = AugState(A_ * X_(0) + B_ * obs.applied_u, F_ * X_(1));
  obs.X = X_;
  return obs;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t n) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (n + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TrainedTable train_table(const MotorParams& motor, const InductanceSurface& surface,
                         const GridSpec& grid, const TableTrainConfig& config) {
  motor.validate();
  grid.validate();
  const std::size_t rows = grid.rows();
  const std::size_t cols = grid.cols();
  const std::size_t total = rows * cols;

  TrainConfig learner = config.learner;
  learner.cost = make_tracking_cost(config.C, config.Q, config.R_u, config.gamma);

  std::vector<QKernel> cores(total);
  std::vector<CoreReport> reports(total);
  std::vector<std::string> failures(total);

  auto train_one = [&](std::size_t n) {
    CoreReport& rep = reports[n];
    rep.row = n / cols;
    rep.col = n % cols;
    rep.theta = grid.theta_nodes[rep.row];
    rep.current = grid.current_nodes[rep.col];
    rep.inductance = surface.at(rep.theta, rep.current);
    const PhaseCoefficients pc = discretize(motor.resistance, motor.sample_period, rep.inductance);
    try {
      FrozenPhaseEnvironment env(pc.A, pc.B, config.F, motor.v_dc, config.reference_level);
      TrainConfig cfg = learner;
      cfg.seed = mix_seed(learner.seed, n);
      const TrainResult result = q_policy_iteration(env, config.K0, cfg);
      cores[n] = result.kernel;
      rep.iterations = result.iterations;
      rep.gain = result.gain;
      rep.history = result.gains;

      const AugmentedModel model =
          build_augmented(pc.A, pc.B, config.C, config.F, config.Q, config.R_u, config.gamma);
      rep.oracle_gain = optimal_gain(are_fixed_point(model).kernel, model);
      const double scale = rep.oracle_gain.K.norm();
      rep.oracle_gap = (rep.gain.K - rep.oracle_gain.K).norm() / (scale > 0 ? scale : 1.0);
    } catch (const std::exception& e) {
      failures[n] = e.what();
    }
  };

  unsigned threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(total));
  if (threads == 1) {
    for (std::size_t n = 0; n < total; ++n) train_one(n);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t n = next++; n < total; n = next++) train_one(n);
      });
    }
  }

  std::ostringstream failed;
  int failed_count = 0;
  for (std::size_t n = 0; n < total; ++n) {
    if (failures[n].empty()) continue;
    ++failed_count;
    failed << "\n  node (" << n / cols << ", " << n % cols << ") theta="
           << grid.theta_nodes[n / cols] << " i=" << grid.current_nodes[n % cols]
           << ": " << failures[n];
  }
  if (failed_count > 0) {
    throw ConvergenceError("train_table: " + std::to_string(failed_count) +
                               " core(s) failed" + failed.str(),
                           0.0);
  }
  return {QCoreTable(grid, std::move(cores), config.gamma, config.tau), std::move(reports)};
}

}  // namespace srmq
