#include "srmq/plant.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "srmq/errors.hpp"
#include "srmq/format.hpp"

namespace srmq {

void MotorParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("motor: ") + what);
  };
  require(std::isfinite(resistance) && resistance > 0, "resistance must be > 0");
  require(std::isfinite(sample_period) && sample_period > 0,
          "sample_period must be > 0");
  require(l_unaligned > 0 && l_unaligned < l_aligned,
          "need 0 < l_unaligned < l_aligned");
  require(std::isfinite(l_aligned), "l_aligned must be finite");
  require(std::isfinite(rotor_pitch) && rotor_pitch > 0,
          "rotor_pitch must be > 0");
  require(std::isfinite(speed_rpm) && speed_rpm >= 0, "speed_rpm must be >= 0");
  require(std::isfinite(v_dc) && v_dc > 0, "v_dc must be > 0");
  require(std::isfinite(i_nominal) && i_nominal > 0, "i_nominal must be > 0");
}

std::int64_t MotorParams::steps_per_pitch() const {
  const double dps = degrees_per_step();
  if (dps <= 0) return 0;
  return std::llround(rotor_pitch / dps);
}

namespace {

void require_ascending(const std::vector<double>& grid, const char* name) {
  if (grid.size() < 2) {
    throw ValidationError(std::string("surface: ") + name +
                          " grid needs at least 2 nodes");
  }
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (!std::isfinite(grid[n]) || (n > 0 && !(grid[n] > grid[n - 1]))) {
      throw ValidationError(std::string("surface: ") + name +
                            " grid must be finite and strictly ascending");
    }
  }
}

// Index of the lower node of the interval holding v (v already inside the grid).
std::size_t lower_index(std::span<const double> grid, double v) {
  auto it = std::upper_bound(grid.begin(), grid.end(), v);
  std::size_t idx = it == grid.begin() ? 0 : std::size_t(it - grid.begin()) - 1;
  return std::min(idx, grid.size() - 2);
}

}  // namespace

InductanceSurface::InductanceSurface(std::vector<double> theta_grid,
                                     std::vector<double> current_grid,
                                     std::vector<double> values)
    : theta_grid_(std::move(theta_grid)),
      current_grid_(std::move(current_grid)),
      values_(std::move(values)) {
  require_ascending(theta_grid_, "theta");
  require_ascending(current_grid_, "current");
  const std::size_t nt = theta_grid_.size();
  const std::size_t nc = current_grid_.size();
  if (values_.size() != nt * nc) {
    throw ValidationError("surface: value count does not match grid shape");
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v <= 0) {
      throw ValidationError("surface: inductance values must be finite and > 0");
    }
  }
  for (std::size_t c = 0; c < nc; ++c) {
    const double first = node(0, c);
    const double last = node(nt - 1, c);
    if (std::abs(first - last) > 1e-9 * std::max(first, last)) {
      throw ValidationError(
          "surface: first and last theta rows must match (periodic profile)");
    }
  }
  for (std::size_t t = 0; t < nt; ++t) {
    for (std::size_t c = 1; c < nc; ++c) {
      if (node(t, c) > node(t, c - 1)) {
        throw ValidationError(
            "surface: inductance must be non-increasing in current");
      }
    }
  }
}

double InductanceSurface::at(double theta_deg, double current) const {
  const double theta = wrap_angle(theta_deg, pitch(), theta_grid_.front());
  const double i = std::clamp(current, current_grid_.front(), current_grid_.back());
  const std::size_t t = lower_index(theta_grid_, theta);
  const std::size_t c = lower_index(current_grid_, i);
  const double l1 = (theta - theta_grid_[t]) / (theta_grid_[t + 1] - theta_grid_[t]);
  const double l2 = (i - current_grid_[c]) / (current_grid_[c + 1] - current_grid_[c]);
  return (1 - l1) * ((1 - l2) * node(t, c) + l2 * node(t, c + 1)) +
         l1 * ((1 - l2) * node(t + 1, c) + l2 * node(t + 1, c + 1));
}

double InductanceSurface::min_value() const {
  return *std::min_element(values_.begin(), values_.end());
}

double InductanceSurface::max_value() const {
  return *std::max_element(values_.begin(), values_.end());
}

InductanceSurface InductanceSurface::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("surface: cannot open " + path.string());

  auto split = [&](const std::string& line, std::size_t line_no) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) {
      throw ValidationError("surface: " + path.string() + ":" +
                            std::to_string(line_no) + ": too few columns");
    }
    return cells;
  };
  auto number = [&](const std::string& cell, std::size_t line_no) {
    const auto value = parse_double(cell);
    if (!value) {
      throw ValidationError("surface: " + path.string() + ":" +
                            std::to_string(line_no) + ": bad number '" + cell + "'");
    }
    return *value;
  };

  std::string line;
  std::size_t line_no = 0;
  std::vector<double> currents;
  std::vector<double> thetas;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, line_no);
    if (currents.empty()) {
      for (std::size_t n = 1; n < cells.size(); ++n) {
        currents.push_back(number(cells[n], line_no));
      }
      continue;
    }
    if (cells.size() != currents.size() + 1) {
      throw ValidationError("surface: " + path.string() + ":" +
                            std::to_string(line_no) + ": row is not rectangular");
    }
    thetas.push_back(number(cells[0], line_no));
    for (std::size_t n = 1; n < cells.size(); ++n) {
      values.push_back(number(cells[n], line_no));
    }
  }
  if (currents.empty()) throw ValidationError("surface: empty file " + path.string());
  return InductanceSurface(std::move(thetas), std::move(currents), std::move(values));
}

void InductanceSurface::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("surface: cannot write " + path.string());
  out << "theta_deg\\current_A";
  for (double i : current_grid_) out << ',' << format_double(i);
  out << '\n';
  for (std::size_t t = 0; t < theta_grid_.size(); ++t) {
    out << format_double(theta_grid_[t]);
    for (std::size_t c = 0; c < current_grid_.size(); ++c) {
      out << ',' << format_double(node(t, c));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("surface: write failed for " + path.string());
}

double AnalyticSurface::evaluate(const MotorParams& motor, double theta_deg,
                                 double current) const {
  const double saturation_current = i_sat > 0 ? i_sat : motor.i_nominal;
  const double ratio = current / saturation_current;
  const double s = 1.0 / (1.0 + kappa * ratio * ratio);
  const double shape =
      0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * theta_deg / motor.rotor_pitch));
  return motor.l_unaligned + (motor.l_aligned - motor.l_unaligned) * shape * s;
}

InductanceSurface default_surface(const MotorParams& motor,
                                  const AnalyticSurface& shape) {
  motor.validate();
  if (shape.theta_intervals < 1 || shape.current_nodes < 2 || shape.kappa < 0) {
    throw ValidationError(
        "surface: need theta_intervals >= 1, current_nodes >= 2, kappa >= 0");
  }
  const double i_max = shape.i_max > 0 ? shape.i_max : 2.0 * motor.i_nominal;
  std::vector<double> thetas(shape.theta_intervals + 1);
  for (int t = 0; t <= shape.theta_intervals; ++t) {
    thetas[t] = motor.rotor_pitch * t / shape.theta_intervals;
  }
  std::vector<double> currents(shape.current_nodes);
  for (int c = 0; c < shape.current_nodes; ++c) {
    currents[c] = i_max * c / (shape.current_nodes - 1);
  }
  std::vector<double> values;
  values.reserve(thetas.size() * currents.size());
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    // The closing row repeats the first so the table is exactly periodic.
    const double theta = t + 1 == thetas.size() ? thetas.front() : thetas[t];
    for (double i : currents) values.push_back(shape.evaluate(motor, theta, i));
  }
  return InductanceSurface(std::move(thetas), std::move(currents), std::move(values));
}

double wrap_angle(double theta_deg, double pitch, double origin) {
  double wrapped = std::fmod(theta_deg - origin, pitch);
  if (wrapped < 0) wrapped += pitch;
  // fmod of a tiny negative can round up to exactly `pitch`.
  if (wrapped >= pitch) wrapped = 0.0;
  return origin + wrapped;
}

PhaseState step_phase(const PhaseState& state, double u,
                      const MotorParams& motor,
                      const InductanceSurface& surface) {
  if (!std::isfinite(u)) throw ValidationError("step_phase: non-finite input voltage");
  const double L = surface.at(state.theta, state.current);
  const double a = 1.0 - motor.sample_period * motor.resistance / L;
  const double b = motor.sample_period / L;
  PhaseState next;
  next.current = std::max(0.0, a * state.current + b * u);
  next.theta = wrap_angle(state.theta + motor.degrees_per_step(), motor.rotor_pitch);
  next.k = state.k + 1;
  return next;
}

void ReferenceProfile::validate(double rotor_pitch) const {
  if (!(theta_on >= 0 && theta_on < theta_off && theta_off <= rotor_pitch)) {
    throw ValidationError("reference: need 0 <= theta_on < theta_off <= rotor_pitch");
  }
  if (!(amplitude >= 0) || !std::isfinite(amplitude)) {
    throw ValidationError("reference: amplitude must be finite and >= 0");
  }
  for (const auto& e : events) {
    if (e.step < 0 || !(e.amplitude >= 0) || !std::isfinite(e.amplitude)) {
      throw ValidationError("reference: events need step >= 0 and amplitude >= 0");
    }
  }
}

double ReferenceProfile::amplitude_at(std::int64_t k) const {
  double value = amplitude;
  std::int64_t latest = -1;
  for (const auto& e : events) {
    if (e.step <= k && e.step >= latest) {
      value = e.amplitude;
      latest = e.step;
    }
  }
  return value;
}

}  // namespace srmq
