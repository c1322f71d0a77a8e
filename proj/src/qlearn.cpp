#include "srmq/qlearn.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "srmq/errors.hpp"

namespace srmq {

HalfVec QKernel::half_vec() const {
  HalfVec g;
  g << G(0, 0), G(0, 1), G(0, 2), G(1, 1), G(1, 2), G(2, 2);
  return g;
}

QKernel QKernel::from_half_vec(const HalfVec& g) {
  QKernel k;
  k.G << g(0), g(1), g(2),
         g(1), g(3), g(4),
         g(2), g(4), g(5);
  return k;
}

double q_value(const QKernel& kernel, const AugState& X, double u) {
  const QVector m = make_m(X, u);
  return 0.5 * m.dot(kernel.G * m);
}

PolicyGain policy_improvement(const QKernel& kernel) {
  const double guu = kernel.G_uu();
  if (!(guu > 0)) {
    std::ostringstream msg;
    msg << "policy_improvement: G_uu = " << guu
        << " is not positive (insufficient excitation?)";
    throw EvaluationError(msg.str());
  }
  return PolicyGain(Eigen::RowVector2d(kernel.G_uX() / guu));
}

double stage_cost(const AugState& X, double u, const Eigen::Matrix2d& Q_q, double R_u) {
  return X.dot(Q_q * X) + R_u * u * u;
}

HalfVec quadratic_basis(const QVector& m) {
  HalfVec phi;
  phi << m(0) * m(0), 2 * m(0) * m(1), 2 * m(0) * m(2),
         m(1) * m(1), 2 * m(1) * m(2),
         m(2) * m(2);
  return phi;
}

HalfVec bellman_row(const DataTuple& tuple, double gamma) {
  return quadratic_basis(tuple.m_k) - gamma * quadratic_basis(tuple.m_next);
}

LsSystem build_ls_rows(std::span<const DataTuple> tuples, double gamma) {
  if (tuples.size() < static_cast<std::size_t>(kMinTuples)) {
    std::ostringstream msg;
    msg << "build_ls_rows: need at least " << kMinTuples << " tuples, got "
        << tuples.size();
    throw ValidationError(msg.str());
  }
  LsSystem sys;
  sys.design.resize(Eigen::Index(tuples.size()), kHalfVecSize);
  sys.targets.resize(Eigen::Index(tuples.size()));
  for (std::size_t n = 0; n < tuples.size(); ++n) {
    sys.design.row(Eigen::Index(n)) = bellman_row(tuples[n], gamma).transpose();
    sys.targets(Eigen::Index(n)) = tuples[n].stage_cost;
  }
  return sys;
}

LsSolution batch_ls_solve(const LsSystem& system, double rank_tol) {
  if (system.design.rows() < kHalfVecSize ||
      system.targets.size() != system.design.rows()) {
    throw ValidationError("batch_ls_solve: malformed system");
  }
  // Monomials of x and u differ by orders of magnitude; equilibrate columns.
  HalfVec scale;
  for (int j = 0; j < kHalfVecSize; ++j) {
    const double n = system.design.col(j).norm();
    scale(j) = n > 0 ? 1.0 / n : 1.0;
  }
  const Eigen::MatrixXd scaled = system.design * scale.asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
  qr.setThreshold(rank_tol);
  const int rank = static_cast<int>(qr.rank());
  if (rank < kHalfVecSize) {
    std::ostringstream msg;
    msg << "batch_ls_solve: design matrix rank " << rank << " < "
        << kHalfVecSize << " (add exploration dither)";
    throw RankDeficientError(msg.str(), rank);
  }
  const Eigen::VectorXd y = qr.solve(system.targets);
  const HalfVec g = scale.asDiagonal() * y;
  LsSolution out;
  out.kernel = QKernel::from_half_vec(g);
  out.residual = (system.design * g - system.targets).norm();
  return out;
}

RlsState RlsState::init(const QKernel& kernel, double tau) {
  if (!(tau > 0)) throw ValidationError("rls: tau must be > 0");
  RlsState s;
  s.g = kernel.half_vec();
  s.eta = tau * Matrix6::Identity();
  return s;
}

RlsState rls_update(const RlsState& state, const HalfVec& row, double target) {
  const HalfVec eta_row = state.eta * row;
  const double denom = 1.0 + row.dot(eta_row);
  const double error = target - row.dot(state.g);
  RlsState next;
  next.g = state.g + eta_row * (error / denom);
  next.eta = state.eta - (eta_row * eta_row.transpose()) / denom;
  next.eta = 0.5 * (next.eta + next.eta.transpose());
  return next;
}

TrainResult q_policy_iteration(Environment& env, const PolicyGain& K0,
                               const TrainConfig& config) {
  if (config.tuples_per_iteration < kMinTuples) {
    throw ValidationError("q_policy_iteration: tuples_per_iteration must be >= 6");
  }
  if (config.max_iterations < 1 || !(config.dither_amplitude >= 0)) {
    throw ValidationError("q_policy_iteration: bad iteration budget or dither");
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> dither(-config.dither_amplitude,
                                                config.dither_amplitude);
  TrainResult result;
  result.gains.push_back(K0);
  PolicyGain gain = K0;
  std::vector<DataTuple> tuples(std::size_t(config.tuples_per_iteration));
  double change = 0.0;

  for (int it = 1; it <= config.max_iterations; ++it) {
    AugState X = env.reset();
    for (auto& tuple : tuples) {
      const double u = gain.control(X) + (config.dither_amplitude > 0 ? dither(rng) : 0.0);
      const auto obs = env.step(u);
      if (!obs.X.allFinite() || std::abs(obs.X(0)) > config.safety_current) {
        std::ostringstream msg;
        msg << "q_policy_iteration: current " << obs.X(0)
            << " A left the safety bound at iteration " << it;
        throw SafetyAbort(msg.str());
      }
      tuple.m_k = make_m(X, obs.applied_u);
      tuple.m_next = make_m(obs.X, gain.control(obs.X));
      tuple.stage_cost = stage_cost(X, obs.applied_u, config.cost);
      X = obs.X;
    }
    const LsSolution fit =
        batch_ls_solve(build_ls_rows(tuples, config.cost.gamma));
    result.max_ls_residual = std::max(result.max_ls_residual, fit.residual);
    const PolicyGain next = policy_improvement(fit.kernel);
    change = (next.K - gain.K).norm();
    gain = next;
    result.gains.push_back(gain);
    result.kernel = fit.kernel;
    if (change < config.gain_tol) {
      result.gain = gain;
      result.iterations = it;
      return result;
    }
  }
  std::ostringstream msg;
  msg << "q_policy_iteration: no convergence after " << config.max_iterations
      << " iterations, last gain change " << change;
  throw ConvergenceError(msg.str(), change);
}

}  // namespace srmq
