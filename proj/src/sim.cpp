#include "srmq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "srmq/errors.hpp"
#include "srmq/qlearn.hpp"

namespace srmq {

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::ScheduledQ: return "scheduled-qlearning";
    case ControllerKind::SingleCore: return "single-qcore";
    case ControllerKind::DeltaModulation: return "delta-modulation";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& name) {
  if (name == "scheduled-qlearning") return ControllerKind::ScheduledQ;
  if (name == "single-qcore") return ControllerKind::SingleCore;
  if (name == "delta-modulation") return ControllerKind::DeltaModulation;
  throw ValidationError("unknown controller '" + name + "'");
}

void Scenario::validate() const {
  motor.validate();
  reference.validate(motor.rotor_pitch);
  if (duration <= 0) throw ValidationError("scenario: duration must be > 0");
  if (!(dither >= 0) || !std::isfinite(dither)) {
    throw ValidationError("scenario: dither must be finite and >= 0");
  }
  if (!(resistance_scale > 0)) throw ValidationError("scenario: resistance_scale must be > 0");
  if (!(delta_band >= 0)) throw ValidationError("scenario: delta_band must be >= 0");
  if (!(safety_factor > 0)) throw ValidationError("scenario: safety_factor must be > 0");
  if (skip_cycles < 0) throw ValidationError("scenario: skip_cycles must be >= 0");
  if (!(online.gain_clamp > 0)) throw ValidationError("scenario: gain_clamp must be > 0");
  if (!(online.trust_region > 0)) throw ValidationError("scenario: trust_region must be > 0");
  if (std::abs(surface.pitch() - motor.rotor_pitch) > 1e-9 * motor.rotor_pitch) {
    throw ValidationError("scenario: surface pitch differs from motor rotor_pitch");
  }
}

double delta_modulation_step(double x, double r, double v_dc) {
  if (x < r) return v_dc;
  if (x > r) return -v_dc;
  return 0.0;
}

double delta_modulation_step(double x, double r, double v_dc, double band,
                             double previous_u) {
  if (band <= 0) return delta_modulation_step(x, r, v_dc);
  if (x < r - band) return v_dc;
  if (x > r + band) return -v_dc;
  return previous_u;
}

namespace {

SimTrace simulate(const Scenario& s, QCoreTable* table) {
  s.validate();
  const bool uses_table = s.controller != ControllerKind::DeltaModulation;
  if (uses_table && table == nullptr) {
    throw ValidationError(std::string("scenario: controller '") + to_string(s.controller) +
                          "' needs a trained Q-core table");
  }
  if (s.controller == ControllerKind::SingleCore &&
      (s.core_row >= table->grid().rows() || s.core_col >= table->grid().cols())) {
    throw ValidationError("scenario: single-qcore indices outside the table");
  }
  const bool learning = s.online_learning && uses_table;

  MotorParams plant = s.motor;
  plant.resistance *= s.resistance_scale;
  const double v_dc = s.motor.v_dc;

  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> dither(-s.dither, s.dither);

  SimTrace trace;
  trace.records.reserve(std::size_t(s.duration));
  PhaseState state;
  state.theta = wrap_angle(s.start_theta, s.motor.rotor_pitch);
  double previous_u = 0.0;

  for (std::int64_t k = 0; k < s.duration; ++k) {
    state.k = k;
    const double r = s.reference.at(state.theta, k);
    const AugState X(state.current, r);

    TraceRecord rec;
    rec.k = k;
    rec.t = double(k) * s.motor.sample_period;
    rec.theta = state.theta;
    rec.r = r;
    rec.x = state.current;

    double u = 0.0;
    switch (s.controller) {
      case ControllerKind::ScheduledQ: {
        const ScheduledGain sg = table->scheduled_gain(state.theta, state.current);
        trace.fallback_count += sg.fallback ? 1 : 0;
        u = sg.gain.control(X);
        rec.K1 = sg.gain.k_x();
        rec.K2 = sg.gain.k_r();
        rec.cell_row = int(sg.cell.row);
        rec.cell_col = int(sg.cell.col);
        break;
      }
      case ControllerKind::SingleCore: {
        const PolicyGain& g = table->gain(s.core_row, s.core_col);
        u = g.control(X);
        rec.K1 = g.k_x();
        rec.K2 = g.k_r();
        rec.cell_row = int(s.core_row);
        rec.cell_col = int(s.core_col);
        break;
      }
      case ControllerKind::DeltaModulation:
        u = delta_modulation_step(state.current, r, v_dc, s.delta_band, previous_u);
        break;
    }
    if (learning && s.dither > 0) u += dither(rng);
    u = std::clamp(u, -v_dc, v_dc);
    previous_u = u;
    rec.u = u;
    rec.cost = stage_cost(X, u, s.cost);

    const PhaseState next = step_phase(state, u, plant, s.surface);
    trace.records.push_back(rec);

    if (next.current > s.safety_current()) {
      std::ostringstream msg;
      msg << "safety abort at step " << k + 1 << ": current " << next.current
          << " A exceeds " << s.safety_current() << " A";
      trace.aborted = true;
      trace.diagnostic = msg.str();
      break;
    }

    if (learning) {
      const double r_next = s.reference.at(next.theta, k + 1);
      // Tuples are only valid while r' = F r (F = 1) and the current floor is
      // not active; otherwise the local linear model does not hold.
      if (r_next == r && next.current > 0.0) {
        const auto [row, col] = table->nearest_node(state.theta, state.current);
        const AugState X_next(next.current, r_next);
        DataTuple tuple;
        tuple.m_k = make_m(X, u);
        tuple.m_next = make_m(X_next, table->gain(row, col).control(X_next));
        tuple.stage_cost = rec.cost;
        const UpdateOutcome outcome =
            table->update_core_online(tuple, state.theta, state.current, s.online);
        trace.online_updates += outcome.applied ? 1 : 0;
        trace.rate_limited_updates += outcome.rate_limited ? 1 : 0;
      }
    }
    state = next;
  }
  return trace;
}

}  // namespace

SimTrace run_closed_loop(const Scenario& scenario, QCoreTable& table) {
  return simulate(scenario, &table);
}

SimTrace run_closed_loop(const Scenario& scenario) {
  return simulate(scenario, nullptr);
}

Metrics compute_metrics(const SimTrace& trace, const Scenario& scenario) {
  const auto& recs = trace.records;
  struct Span {
    std::size_t begin, end;  // [begin, end)
  };
  std::vector<Span> spans;
  for (std::size_t n = 0; n < recs.size();) {
    if (!scenario.reference.in_window(recs[n].theta)) {
      ++n;
      continue;
    }
    std::size_t m = n;
    while (m < recs.size() && scenario.reference.in_window(recs[m].theta)) ++m;
    spans.push_back({n, m});
    n = m;
  }
  if (spans.empty()) throw ValidationError("metrics: trace has no conduction window");

  auto jump = [&](std::size_t n) { return n == 0 || recs[n].r != recs[n - 1].r; };

  Metrics out;
  double sum_sq = 0.0, sum_sq_rel = 0.0, settle_sum = 0.0;
  std::int64_t count = 0, count_rel = 0;

  for (std::size_t w = 0; w < spans.size(); ++w) {
    const Span sp = spans[w];
    WindowMetrics wm;
    wm.first_k = recs[sp.begin].k;
    wm.samples = std::int64_t(sp.end - sp.begin);
    wm.amplitude = recs[sp.end - 1].r;

    double w_sq = 0.0, w_sq_rel = 0.0;
    std::int64_t w_n = 0, w_n_rel = 0;
    std::size_t segment_start = sp.begin;
    for (std::size_t n = sp.begin; n < sp.end; ++n) {
      if (jump(n)) {
        segment_start = n;
        continue;
      }
      const double e = recs[n].x - recs[n].r;
      w_sq += e * e;
      ++w_n;
      if (recs[n].r > 0) {
        w_sq_rel += (e / recs[n].r) * (e / recs[n].r);
        ++w_n_rel;
      }
    }
    wm.rmse = w_n ? std::sqrt(w_sq / double(w_n)) : 0.0;
    wm.rmse_rel = w_n_rel ? std::sqrt(w_sq_rel / double(w_n_rel)) : 0.0;

    // Settling on the last flat segment: the tail that stays within 5 %.
    const double tol = 0.05 * wm.amplitude;
    const std::size_t first_valid = jump(segment_start) ? segment_start + 1 : segment_start;
    std::size_t settle = sp.end;
    while (settle > first_valid && std::abs(recs[settle - 1].x - recs[settle - 1].r) <= tol) {
      --settle;
    }
    // A tail shorter than a tenth of the segment is a chance crossing, not settling.
    const std::size_t segment_len = sp.end - first_valid;
    const std::size_t min_tail = std::max<std::size_t>(10, segment_len / 10);
    wm.settled = sp.end - settle >= min_tail;
    if (!wm.settled) settle = sp.end;
    wm.settling_steps = std::int64_t(settle - first_valid);
    const std::size_t ripple_from = wm.settled ? settle : first_valid;
    if (ripple_from < sp.end) {
      double lo = recs[ripple_from].x - recs[ripple_from].r, hi = lo;
      for (std::size_t n = ripple_from; n < sp.end; ++n) {
        const double d = recs[n].x - recs[n].r;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      wm.ripple = hi - lo;
    }

    if (w > 0) {
      const Span prev = spans[w - 1];
      const std::size_t len = std::min(sp.end - sp.begin, prev.end - prev.begin);
      double dk = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const auto& a = recs[sp.begin + j];
        const auto& b = recs[prev.begin + j];
        dk += std::hypot(a.K1 - b.K1, a.K2 - b.K2);
      }
      wm.mean_dk = len ? dk / double(len) : 0.0;
    }

    if (std::int64_t(w) >= scenario.skip_cycles) {
      sum_sq += w_sq;
      count += w_n;
      sum_sq_rel += w_sq_rel;
      count_rel += w_n_rel;
      out.ripple = std::max(out.ripple, wm.ripple);
      settle_sum += double(wm.settling_steps);
      ++out.evaluated_windows;
      out.final_mean_dk = wm.mean_dk;
    }
    out.windows.push_back(wm);
  }
  out.rmse = count ? std::sqrt(sum_sq / double(count)) : 0.0;
  out.rmse_rel = count_rel ? std::sqrt(sum_sq_rel / double(count_rel)) : 0.0;
  out.mean_settling_steps = out.evaluated_windows ? settle_sum / double(out.evaluated_windows) : 0.0;
  return out;
}

}  // namespace srmq
