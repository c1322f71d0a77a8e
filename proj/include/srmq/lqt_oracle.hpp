#pragma once

#include <vector>

#include <Eigen/Dense>

#include "srmq/control_types.hpp"

namespace srmq {

/// Scalar forward-Euler coefficients of one phase at a frozen inductance.
struct PhaseCoefficients {
  double A = 1.0;  // 1 - T R / L
  double B = 0.0;  // T / L
};

PhaseCoefficients discretize(double resistance, double sample_period,
                             double inductance);

/// Plant stacked with the reference generator: X' = A_a X + B_b u, y = C_c X.
struct AugmentedModel {
  Eigen::Matrix2d A_a = Eigen::Matrix2d::Identity();
  Eigen::Vector2d B_b = Eigen::Vector2d::Zero();
  Eigen::RowVector2d C_c = Eigen::RowVector2d::Zero();
  TrackingCost cost;

  const Eigen::Matrix2d& Q_q() const { return cost.Q_q; }
  double R_u() const { return cost.R_u; }
  double gamma() const { return cost.gamma; }
};

AugmentedModel build_augmented(double A, double B, double C, double F,
                               double Q, double R_u, double gamma);

/// Quadratic value kernel: V(X) = 1/2 X' P X.
struct KernelP {
  Eigen::Matrix2d P = Eigen::Matrix2d::Zero();
};

/// One application of the discounted Riccati map
///   Q_q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA.
Eigen::Matrix2d riccati_map(const AugmentedModel& model, const Eigen::Matrix2d& P);

/// Frobenius norm of P - riccati_map(P).
double are_residual(const AugmentedModel& model, const KernelP& kernel);

struct AreSolution {
  KernelP kernel;
  int iterations = 0;
  double residual = 0.0;
};

/// Iterates the Riccati map from P = 0 until the residual drops below `tol`.
/// Throws ConvergenceError (carrying the last residual) after `max_iter`.
AreSolution are_fixed_point(const AugmentedModel& model, double tol = 1e-10,
                            int max_iter = 10000);

/// K = (R + g B'PB)^-1 g B'PA. Throws EvaluationError if the denominator <= 0.
PolicyGain optimal_gain(const KernelP& kernel, const AugmentedModel& model);

double spectral_radius(const Eigen::Matrix2d& M);

/// Spectral radius of sqrt(gamma) (A_a - B_b K).
double discounted_closed_loop_radius(const AugmentedModel& model,
                                     const PolicyGain& gain);

/// Exact value kernel of a fixed policy: solves the discounted Lyapunov
/// equation P = Q_q + K'RK + g (A - BK)' P (A - BK) as a 3-unknown linear
/// system over the independent entries of the symmetric P.
KernelP evaluate_policy(const AugmentedModel& model, const PolicyGain& gain);

struct PolicyIterationResult {
  KernelP kernel;
  PolicyGain gain;
  int iterations = 0;
  std::vector<KernelP> kernels;  // P^1, P^2, ... one per evaluation
};

/// Model-based policy iteration. K0 must satisfy the discounted stability
/// test; a non-stabilizing K0 raises ValidationError.
PolicyIterationResult policy_iteration_model_based(const AugmentedModel& model,
                                                   const PolicyGain& K0,
                                                   double tol = 1e-10,
                                                   int max_iter = 100);

}  // namespace srmq
