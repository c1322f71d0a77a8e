#pragma once

// Model-free Q-learning for the linear quadratic tracker.
//
// Nothing in this header (or its implementation) sees plant coefficients.
// Learning consumes (M_k, M_{k+1}, stage cost) tuples and, for policy
// iteration, an Environment that only reports observed augmented states.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "srmq/control_types.hpp"

namespace srmq {

/// M = [x, r, u]: augmented state followed by the input.
using QVector = Eigen::Vector3d;
/// Independent entries of symmetric G in the order
/// (G00, G01, G02, G11, G12, G22).
using HalfVec = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

inline constexpr int kHalfVecSize = 6;

/// Q(X, u) = 1/2 M' G M with blocks G_XX (2x2), G_Xu (2x1), G_uX, G_uu.
struct QKernel {
  Eigen::Matrix3d G = Eigen::Matrix3d::Zero();

  Eigen::Matrix2d G_XX() const { return G.topLeftCorner<2, 2>(); }
  Eigen::Vector2d G_Xu() const { return G.topRightCorner<2, 1>(); }
  Eigen::RowVector2d G_uX() const { return G.bottomLeftCorner<1, 2>(); }
  double G_uu() const { return G(2, 2); }

  HalfVec half_vec() const;
  static QKernel from_half_vec(const HalfVec& g);
};

inline QVector make_m(const AugState& X, double u) { return {X(0), X(1), u}; }

double q_value(const QKernel& kernel, const AugState& X, double u);

/// K = G_uu^-1 G_uX. Throws EvaluationError when G_uu <= 0.
PolicyGain policy_improvement(const QKernel& kernel);

/// X' Q_q X + R_u u^2.
double stage_cost(const AugState& X, double u, const Eigen::Matrix2d& Q_q, double R_u);
inline double stage_cost(const AugState& X, double u, const TrackingCost& cost) {
  return stage_cost(X, u, cost.Q_q, cost.R_u);
}

/// One sampled Bellman relation for the current policy: m_next carries the
/// policy's action at k+1, not the applied (dithered) one.
struct DataTuple {
  QVector m_k = QVector::Zero();
  QVector m_next = QVector::Zero();
  double stage_cost = 0.0;
};

/// Quadratic monomials of M in the half-vectorized basis, cross terms doubled,
/// so that M' G M = quadratic_basis(M) . half_vec(G).
HalfVec quadratic_basis(const QVector& m);

/// quadratic_basis(m_k) - gamma * quadratic_basis(m_next).
HalfVec bellman_row(const DataTuple& tuple, double gamma);

struct LsSystem {
  Eigen::Matrix<double, Eigen::Dynamic, kHalfVecSize> design;
  Eigen::VectorXd targets;
};

/// Minimum number of tuples for one evaluation: (n)(n+1)/2 with n = 3.
inline constexpr int kMinTuples = kHalfVecSize;

/// Stacks one Bellman row per tuple; targets are the stage costs.
/// Throws ValidationError for fewer than kMinTuples tuples.
LsSystem build_ls_rows(std::span<const DataTuple> tuples, double gamma);

struct LsSolution {
  QKernel kernel;
  double residual = 0.0;  // ||design g - targets||
};

/// Least-squares fit of the half-vectorized G (columns are equilibrated before
/// a rank-revealing QR). Throws RankDeficientError with the numerical rank.
LsSolution batch_ls_solve(const LsSystem& system, double rank_tol = 1e-10);

struct RlsState {
  HalfVec g = HalfVec::Zero();
  Matrix6 eta = Matrix6::Identity();

  /// g from `kernel`, eta = tau I.
  static RlsState init(const QKernel& kernel, double tau);
};

/// One recursive least-squares step on (row, target).
RlsState rls_update(const RlsState& state, const HalfVec& row, double target);

/// Black-box plant as seen by the learner.
class Environment {
 public:
  struct Observation {
    AugState X;
    double applied_u = 0.0;  // input actually applied (after any limiting)
  };

  virtual ~Environment() = default;
  /// Starts a fresh trajectory and returns the initial augmented state.
  virtual AugState reset() = 0;
  /// Applies u, advances one sample, and reports the next state.
  virtual Observation step(double u) = 0;
};

struct TrainConfig {
  TrackingCost cost;
  int tuples_per_iteration = 6;
  double dither_amplitude = 15.0;   // V, zero-mean uniform on [-a, a]
  double gain_tol = 1e-4;
  int max_iterations = 100;
  double safety_current = 15.0;     // A; |x| beyond this aborts training
  std::uint64_t seed = 1;
};

struct TrainResult {
  QKernel kernel;
  PolicyGain gain;
  int iterations = 0;
  std::vector<PolicyGain> gains;   // K^0, K^1, ...
  double max_ls_residual = 0.0;
};

/// Q-function policy iteration: collect tuples under u = -K X + dither,
/// evaluate G by batch least squares, improve K from G, repeat until the
/// gain change falls below gain_tol.
/// Throws SafetyAbort on divergence, RankDeficientError on poor excitation,
/// ConvergenceError after max_iterations.
TrainResult q_policy_iteration(Environment& env, const PolicyGain& K0,
                               const TrainConfig& config);

}  // namespace srmq
