#include "srmq/lqt_oracle.hpp"

#include <cmath>
#include <sstream>

#include "srmq/errors.hpp"

namespace srmq {

PhaseCoefficients discretize(double resistance, double sample_period,
                             double inductance) {
  if (!(inductance > 0)) throw ValidationError("discretize: inductance must be > 0");
  return {1.0 - sample_period * resistance / inductance, sample_period / inductance};
}

AugmentedModel build_augmented(double A, double B, double C, double F, double Q,
                               double R_u, double gamma) {
  if (!std::isfinite(A) || !std::isfinite(B) || !std::isfinite(F)) {
    throw ValidationError("build_augmented: plant coefficients must be finite");
  }
  AugmentedModel model;
  model.A_a << A, 0.0, 0.0, F;
  model.B_b << B, 0.0;
  model.C_c << C, 0.0;
  model.cost = make_tracking_cost(C, Q, R_u, gamma);
  return model;
}

Eigen::Matrix2d riccati_map(const AugmentedModel& model, const Eigen::Matrix2d& P) {
  const auto& A = model.A_a;
  const auto& B = model.B_b;
  const double g = model.gamma();
  const double s = model.R_u() + g * B.dot(P * B);
  const Eigen::RowVector2d BtPA = B.transpose() * P * A;
  Eigen::Matrix2d next = model.Q_q() + g * A.transpose() * P * A -
                         (g * g / s) * BtPA.transpose() * BtPA;
  return 0.5 * (next + next.transpose());
}

double are_residual(const AugmentedModel& model, const KernelP& kernel) {
  return (kernel.P - riccati_map(model, kernel.P)).norm();
}

AreSolution are_fixed_point(const AugmentedModel& model, double tol, int max_iter) {
  Eigen::Matrix2d P = Eigen::Matrix2d::Zero();
  double residual = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::Matrix2d next = riccati_map(model, P);
    residual = (next - P).norm();
    P = next;
    if (!std::isfinite(residual)) break;
    if (residual < tol) {
      AreSolution out;
      out.kernel.P = P;
      out.iterations = it;
      out.residual = are_residual(model, out.kernel);
      return out;
    }
  }
  std::ostringstream msg;
  msg << "are_fixed_point: no convergence after " << max_iter
      << " iterations, last residual " << residual;
  throw ConvergenceError(msg.str(), residual);
}

PolicyGain optimal_gain(const KernelP& kernel, const AugmentedModel& model) {
  const auto& B = model.B_b;
  const double g = model.gamma();
  const double denom = model.R_u() + g * B.dot(kernel.P * B);
  if (!(denom > 0)) {
    throw EvaluationError("optimal_gain: R + gamma B'PB is not positive");
  }
  return PolicyGain(Eigen::RowVector2d((g / denom) * B.transpose() * kernel.P * model.A_a));
}

double spectral_radius(const Eigen::Matrix2d& M) {
  return M.eigenvalues().cwiseAbs().maxCoeff();
}

double discounted_closed_loop_radius(const AugmentedModel& model,
                                     const PolicyGain& gain) {
  const Eigen::Matrix2d closed = model.A_a - model.B_b * gain.K;
  return std::sqrt(model.gamma()) * spectral_radius(closed);
}

KernelP evaluate_policy(const AugmentedModel& model, const PolicyGain& gain) {
  const Eigen::Matrix2d closed = model.A_a - model.B_b * gain.K;
  const double g = model.gamma();
  const Eigen::Matrix2d stage =
      model.Q_q() + gain.K.transpose() * model.R_u() * gain.K;

  // Unknowns (p00, p01, p11); columns are the Lyapunov operator applied to the
  // symmetric basis matrices.
  const Eigen::Matrix2d basis[3] = {
      (Eigen::Matrix2d() << 1, 0, 0, 0).finished(),
      (Eigen::Matrix2d() << 0, 1, 1, 0).finished(),
      (Eigen::Matrix2d() << 0, 0, 0, 1).finished(),
  };
  Eigen::Matrix3d op;
  for (int j = 0; j < 3; ++j) {
    const Eigen::Matrix2d image =
        basis[j] - g * closed.transpose() * basis[j] * closed;
    op.col(j) << image(0, 0), image(0, 1), image(1, 1);
  }
  const Eigen::Vector3d rhs(stage(0, 0), stage(0, 1), stage(1, 1));
  Eigen::FullPivLU<Eigen::Matrix3d> lu(op);
  if (!lu.isInvertible()) {
    throw EvaluationError("evaluate_policy: discounted Lyapunov operator is singular");
  }
  const Eigen::Vector3d p = lu.solve(rhs);
  KernelP out;
  out.P << p(0), p(1), p(1), p(2);
  return out;
}

PolicyIterationResult policy_iteration_model_based(const AugmentedModel& model,
                                                   const PolicyGain& K0,
                                                   double tol, int max_iter) {
  const double radius = discounted_closed_loop_radius(model, K0);
  if (!(radius < 1.0)) {
    std::ostringstream msg;
    msg << "policy_iteration: initial gain is not stabilizing (discounted "
           "spectral radius "
        << radius << ")";
    throw ValidationError(msg.str());
  }
  PolicyIterationResult result;
  PolicyGain gain = K0;
  double change = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    const KernelP kernel = evaluate_policy(model, gain);
    if (!kernel.P.allFinite()) {
      throw ConvergenceError("policy_iteration: evaluation diverged", change);
    }
    result.kernels.push_back(kernel);
    const PolicyGain next = optimal_gain(kernel, model);
    change = (next.K - gain.K).norm();
    gain = next;
    if (change < tol) {
      result.kernel = kernel;
      result.gain = gain;
      result.iterations = it;
      return result;
    }
  }
  std::ostringstream msg;
  msg << "policy_iteration: no convergence after " << max_iter
      << " iterations, last gain change " << change;
  throw ConvergenceError(msg.str(), change);
}

}  // namespace srmq
