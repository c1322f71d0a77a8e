#include "srmq/control_types.hpp"

#include <cmath>

#include "srmq/errors.hpp"

namespace srmq {

TrackingCost make_tracking_cost(double C, double Q, double R_u, double gamma) {
  if (!(R_u > 0) || !std::isfinite(R_u)) {
    throw ValidationError("cost: R_u must be finite and > 0");
  }
  if (!(Q >= 0) || !std::isfinite(Q) || !std::isfinite(C)) {
    throw ValidationError("cost: Q must be finite and >= 0, C finite");
  }
  if (!(gamma > 0 && gamma <= 1)) {
    throw ValidationError("cost: gamma must lie in (0, 1]");
  }
  const Eigen::RowVector2d error_row(C, -1.0);
  TrackingCost cost;
  cost.Q_q = error_row.transpose() * Q * error_row;
  cost.R_u = R_u;
  cost.gamma = gamma;
  return cost;
}

}  // namespace srmq
