#pragma once

#include <Eigen/Dense>

namespace srmq {

/// Augmented state X = [x, r]: phase current followed by the reference sample.
using AugState = Eigen::Vector2d;

/// Linear state feedback u = -K X with K = [K_x, K_r].
struct PolicyGain {
  Eigen::RowVector2d K = Eigen::RowVector2d::Zero();

  PolicyGain() = default;
  PolicyGain(double k_x, double k_r) : K(k_x, k_r) {}
  explicit PolicyGain(const Eigen::RowVector2d& k) : K(k) {}

  double control(const AugState& X) const { return -K.dot(X); }
  double k_x() const { return K(0); }
  double k_r() const { return K(1); }
};

/// Quadratic tracking cost: stage cost X' Q_q X + R_u u^2, discounted by gamma.
///
/// Q_q = [C -1]' Q [C -1] penalizes the output error C x - r. These are design
/// weights, not plant parameters, so the model-free learner may use them.
struct TrackingCost {
  Eigen::Matrix2d Q_q = Eigen::Matrix2d::Zero();
  double R_u = 1.0;
  double gamma = 0.9;
};

/// Builds Q_q from the output row C and the scalar error weight Q.
/// Throws ValidationError for R_u <= 0, Q < 0 or gamma outside (0, 1].
TrackingCost make_tracking_cost(double C, double Q, double R_u, double gamma);

}  // namespace srmq
