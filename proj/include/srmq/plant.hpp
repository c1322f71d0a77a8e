#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace srmq {

/// Electrical and kinematic parameters of one SRM phase.
/// Defaults describe a 500 W 12/8 machine (45 deg rotor pitch).
struct MotorParams {
  double resistance = 2.0;       // ohm
  double sample_period = 1e-4;   // s
  double l_unaligned = 6e-3;     // H
  double l_aligned = 16e-3;      // H
  double rotor_pitch = 45.0;     // mechanical deg per electrical period
  double speed_rpm = 60.0;
  double v_dc = 300.0;           // V
  double i_nominal = 5.0;        // A

  void validate() const;

  /// Mechanical degrees travelled in one sample.
  double degrees_per_step() const { return speed_rpm * 6.0 * sample_period; }
  /// Samples per electrical period (rounded).
  std::int64_t steps_per_pitch() const;
};

/// Phase inductance L(theta, i) tabulated on a rectangular grid.
///
/// Rows follow theta, columns follow current. The theta grid spans exactly one
/// rotor pitch and its first and last rows hold identical values, so lookups
/// wrap periodically. Currents above the grid are clamped to the last column.
class InductanceSurface {
 public:
  /// `values` is row-major: values[t * current_grid.size() + c].
  InductanceSurface(std::vector<double> theta_grid,
                    std::vector<double> current_grid,
                    std::vector<double> values);

  /// Bilinear lookup; theta is wrapped by the pitch, i clamped to the grid.
  double at(double theta_deg, double current) const;

  double node(std::size_t t, std::size_t c) const {
    return values_[t * current_grid_.size() + c];
  }
  std::span<const double> theta_grid() const { return theta_grid_; }
  std::span<const double> current_grid() const { return current_grid_; }
  std::span<const double> values() const { return values_; }
  double pitch() const { return theta_grid_.back() - theta_grid_.front(); }
  double min_value() const;
  double max_value() const;

  /// CSV: first row is "theta\i" then the current grid; each following row is
  /// theta followed by L in henries.
  static InductanceSurface load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

 private:
  std::vector<double> theta_grid_;
  std::vector<double> current_grid_;
  std::vector<double> values_;
};

/// Raised-cosine profile with current saturation:
///   L = L_u + (L_a - L_u) * (1 + cos(2 pi theta / pitch)) / 2 * s(i),
///   s(i) = 1 / (1 + kappa (i / i_sat)^2).
/// theta = 0 is the aligned position, pitch/2 the unaligned one.
struct AnalyticSurface {
  double kappa = 0.5;
  double i_sat = 0.0;          // <= 0 selects MotorParams::i_nominal
  int theta_intervals = 16;    // distinct theta nodes per pitch
  int current_nodes = 8;
  double i_max = 0.0;          // <= 0 selects 2 * i_nominal

  double evaluate(const MotorParams& motor, double theta_deg,
                  double current) const;
};

InductanceSurface default_surface(const MotorParams& motor,
                                  const AnalyticSurface& shape = {});

/// Wraps theta into [origin, origin + pitch).
double wrap_angle(double theta_deg, double pitch, double origin = 0.0);

struct PhaseState {
  double current = 0.0;   // A
  double theta = 0.0;     // deg, wrapped to one pitch
  std::int64_t k = 0;
};

/// Forward-Euler step x' = (1 - T R / L) x + (T / L) u with L = L(theta, x).
/// The caller clamps u to [-V_dc, V_dc]; the resulting current is clamped at 0.
/// Throws ValidationError for non-finite u.
PhaseState step_phase(const PhaseState& state, double u,
                      const MotorParams& motor,
                      const InductanceSurface& surface);

struct StepEvent {
  std::int64_t step = 0;
  double amplitude = 0.0;
};

/// Square current pulses: `amplitude` inside [theta_on, theta_off), zero
/// elsewhere. Step events replace the amplitude from their step index on.
struct ReferenceProfile {
  double amplitude = 4.0;
  double theta_on = 22.5;
  double theta_off = 40.5;
  std::vector<StepEvent> events;

  void validate(double rotor_pitch) const;
  bool in_window(double theta_deg) const {
    return theta_deg >= theta_on && theta_deg < theta_off;
  }
  double amplitude_at(std::int64_t k) const;
  double at(double theta_deg, std::int64_t k) const {
    return in_window(theta_deg) ? amplitude_at(k) : 0.0;
  }
};

}  // namespace srmq
