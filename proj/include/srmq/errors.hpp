#pragma once

#include <stdexcept>
#include <string>

namespace srmq {

/// Invalid parameters, malformed files, or inputs outside a documented range.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative solver or learner did not converge within its budget.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}

  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

/// Least-squares design matrix lacks full column rank (insufficient excitation).
class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, int rank)
      : std::runtime_error(what), rank_(rank) {}

  int rank() const { return rank_; }

 private:
  int rank_;
};

/// Q-kernel has G_uu <= 0, so no greedy gain exists.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Phase current left the safety envelope.
class SafetyAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace srmq
