#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "srmq/errors.hpp"
#include "srmq/plant.hpp"

using namespace srmq;

namespace {

InductanceSurface flat_surface(double L) {
  return InductanceSurface({0.0, 45.0}, {0.0, 10.0}, {L, L, L, L});
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("srmq_plant_" + name);
}

}  // namespace

TEST(InductanceSurface, AlignedNodeAtZeroCurrentIsAlignedInductance) {
  const InductanceSurface s = default_surface(MotorParams{});
  EXPECT_DOUBLE_EQ(s.at(0.0, 0.0), 16e-3);
}

TEST(InductanceSurface, AlignedNodeAtOneAmpIsWithinTwoPercentOf16mH) {
  // Saturation lowers the aligned value slightly at 1 A.
  const InductanceSurface s = default_surface(MotorParams{});
  EXPECT_NEAR(s.at(0.0, 1.0), 16e-3, 0.02 * 16e-3);
}

TEST(InductanceSurface, UnalignedNodeIsUnalignedInductanceAtAnyCurrent) {
  const InductanceSurface s = default_surface(MotorParams{});
  for (double i : {0.0, 1.0, 4.0, 9.0}) EXPECT_NEAR(s.at(22.5, i), 6e-3, 1e-15);
}

TEST(InductanceSurface, QuarterPitchAtZeroCurrentIsMeanOfEndpoints) {
  const InductanceSurface s = default_surface(MotorParams{});
  EXPECT_NEAR(s.at(11.25, 0.0), 11e-3, 1e-15);
}

TEST(InductanceSurface, NodesReproduceTheAnalyticFormula) {
  const MotorParams m;
  const AnalyticSurface shape;
  const InductanceSurface s = default_surface(m, shape);
  for (std::size_t t = 0; t + 1 < s.theta_grid().size(); ++t) {
    for (std::size_t c = 0; c < s.current_grid().size(); ++c) {
      const double th = s.theta_grid()[t];
      const double i = s.current_grid()[c];
      // Independent evaluation of the raised-cosine construction.
      const double shape_term = 0.5 * (1 + std::cos(2 * M_PI * th / 45.0));
      const double sat = 1.0 / (1.0 + 0.5 * (i / 5.0) * (i / 5.0));
      EXPECT_NEAR(s.at(th, i), 6e-3 + 10e-3 * shape_term * sat, 1e-15);
    }
  }
}

TEST(InductanceSurface, MidCellIsBilinearBlendOfFormulaCorners) {
  const MotorParams m;
  const AnalyticSurface shape;
  const InductanceSurface s = default_surface(m, shape);
  const double t0 = 2.8125, t1 = 5.625;
  const double i0 = 10.0 / 7.0, i1 = 20.0 / 7.0;
  const double th = t0 + 0.3 * (t1 - t0), i = i0 + 0.6 * (i1 - i0);
  const double expected = 0.7 * 0.4 * shape.evaluate(m, t0, i0) + 0.3 * 0.4 * shape.evaluate(m, t1, i0) +
                          0.7 * 0.6 * shape.evaluate(m, t0, i1) + 0.3 * 0.6 * shape.evaluate(m, t1, i1);
  EXPECT_NEAR(s.at(th, i), expected, 1e-15);
}

TEST(InductanceSurface, PeriodicInTheta) {
  const InductanceSurface s = default_surface(MotorParams{});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(0, 45), cur(0, 10);
  for (int n = 0; n < 200; ++n) {
    const double t = th(rng), i = cur(rng);
    EXPECT_NEAR(s.at(t + 45.0, i), s.at(t, i), 1e-15);
    EXPECT_NEAR(s.at(t - 90.0, i), s.at(t, i), 1e-15);
  }
}

TEST(InductanceSurface, CurrentAboveGridIsClamped) {
  const InductanceSurface s = default_surface(MotorParams{});
  EXPECT_DOUBLE_EQ(s.at(5.0, 50.0), s.at(5.0, 10.0));
}

TEST(InductanceSurface, LipschitzWithinACell) {
  const InductanceSurface s = default_surface(MotorParams{});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  const auto tg = s.theta_grid();
  const auto cg = s.current_grid();
  for (int n = 0; n < 500; ++n) {
    const std::size_t t = std::size_t(u(rng) * (tg.size() - 1));
    const std::size_t c = std::size_t(u(rng) * (cg.size() - 1));
    const double dt = tg[t + 1] - tg[t], dc = cg[c + 1] - cg[c];
    const double lo = std::min({s.node(t, c), s.node(t + 1, c), s.node(t, c + 1), s.node(t + 1, c + 1)});
    const double hi = std::max({s.node(t, c), s.node(t + 1, c), s.node(t, c + 1), s.node(t + 1, c + 1)});
    const double a1 = u(rng), b1 = u(rng), a2 = u(rng), b2 = u(rng);
    const double p = s.at(tg[t] + a1 * dt, cg[c] + b1 * dc);
    const double q = s.at(tg[t] + a2 * dt, cg[c] + b2 * dc);
    // Bilinear: |dL| <= (hi - lo) * (|da| + |db|).
    EXPECT_LE(std::abs(p - q), (hi - lo) * (std::abs(a1 - a2) + std::abs(b1 - b2)) + 1e-18);
  }
}

TEST(InductanceSurface, RejectsMalformedGrids) {
  EXPECT_THROW(InductanceSurface({0.0, 0.0}, {0.0, 1.0}, {1, 1, 1, 1}), ValidationError);
  EXPECT_THROW(InductanceSurface({0.0}, {0.0, 1.0}, {1, 1}), ValidationError);
  EXPECT_THROW(InductanceSurface({0.0, 45.0}, {0.0, 1.0}, {1, 1, 1}), ValidationError);
  EXPECT_THROW(InductanceSurface({0.0, 45.0}, {0.0, 1.0}, {1, 1, 1, -1}), ValidationError);
  // not periodic
  EXPECT_THROW(InductanceSurface({0.0, 45.0}, {0.0, 1.0}, {2, 1, 3, 1}), ValidationError);
  // increasing in current
  EXPECT_THROW(InductanceSurface({0.0, 45.0}, {0.0, 1.0}, {1, 2, 1, 2}), ValidationError);
}

TEST(InductanceSurface, CsvRoundTripIsBitExact) {
  const InductanceSurface s = default_surface(MotorParams{});
  const auto path = temp_path("surface.csv");
  s.save_csv(path);
  const InductanceSurface back = InductanceSurface::load_csv(path);
  ASSERT_EQ(back.values().size(), s.values().size());
  for (std::size_t n = 0; n < s.values().size(); ++n) EXPECT_EQ(back.values()[n], s.values()[n]);
  for (std::size_t n = 0; n < s.theta_grid().size(); ++n) EXPECT_EQ(back.theta_grid()[n], s.theta_grid()[n]);
  std::filesystem::remove(path);
}

TEST(InductanceSurface, CsvRejectsRaggedRows) {
  const auto path = temp_path("ragged.csv");
  {
    std::ofstream out(path);
    out << "theta_deg\\current_A,0,10\n0,0.016,0.015\n45,0.016\n";
  }
  EXPECT_THROW(InductanceSurface::load_csv(path), ValidationError);
  std::filesystem::remove(path);
}

TEST(StepPhase, DecayAtSixMillihenry) {
  const MotorParams m;
  const InductanceSurface s = flat_surface(6e-3);
  PhaseState st;
  st.current = 4.0;
  const PhaseState next = step_phase(st, 0.0, m, s);
  EXPECT_NEAR(next.current, (1 - 1e-4 * 2 / 6e-3) * 4.0, 1e-15);
  EXPECT_NEAR(next.current, 3.8667, 1e-4);
  EXPECT_EQ(next.k, 1);
}

TEST(StepPhase, OriginIsFixed) {
  const PhaseState next = step_phase(PhaseState{}, 0.0, MotorParams{}, default_surface(MotorParams{}));
  EXPECT_EQ(next.current, 0.0);
}

TEST(StepPhase, ResistiveBalanceHoldsCurrentForAnyLevel) {
  const MotorParams m;
  const InductanceSurface s = flat_surface(9e-3);
  for (double x : {0.1, 1.0, 4.0, 7.5}) {
    PhaseState st;
    st.current = x;
    EXPECT_NEAR(step_phase(st, m.resistance * x, m, s).current, x, 1e-14);
  }
}

TEST(StepPhase, GeometricDecayWithConstantInductance) {
  const MotorParams m;
  const InductanceSurface s = flat_surface(16e-3);
  const double ratio = 1 - m.sample_period * m.resistance / 16e-3;
  ASSERT_GT(ratio, 0.0);
  ASSERT_LT(ratio, 1.0);
  PhaseState st;
  st.current = 5.0;
  for (int k = 0; k < 50; ++k) {
    const PhaseState next = step_phase(st, 0.0, m, s);
    EXPECT_NEAR(next.current / st.current, ratio, 1e-13);
    st = next;
  }
}

TEST(StepPhase, CurrentClampedAtZeroAndThetaWraps) {
  MotorParams m;
  const InductanceSurface s = flat_surface(6e-3);
  PhaseState st;
  st.current = 1.0;
  st.theta = 44.99;
  const PhaseState next = step_phase(st, -300.0, m, s);
  EXPECT_EQ(next.current, 0.0);
  EXPECT_GE(next.theta, 0.0);
  EXPECT_LT(next.theta, 45.0);
  EXPECT_NEAR(next.theta, 44.99 + m.degrees_per_step() - 45.0, 1e-12);
}

TEST(StepPhase, RejectsNonFiniteInput) {
  EXPECT_THROW(step_phase(PhaseState{}, std::nan(""), MotorParams{}, flat_surface(6e-3)), ValidationError);
  EXPECT_THROW(step_phase(PhaseState{}, INFINITY, MotorParams{}, flat_surface(6e-3)), ValidationError);
}

TEST(MotorParams, KinematicsAtSixtyRpm) {
  const MotorParams m;
  EXPECT_NEAR(m.degrees_per_step(), 0.036, 1e-15);
  EXPECT_EQ(m.steps_per_pitch(), 1250);
}

TEST(MotorParams, ValidationRejectsBadValues) {
  MotorParams m;
  m.l_unaligned = 20e-3;
  EXPECT_THROW(m.validate(), ValidationError);
  m = MotorParams{};
  m.resistance = 0;
  EXPECT_THROW(m.validate(), ValidationError);
  m = MotorParams{};
  m.v_dc = -1;
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(Reference, InsideAndOutsideWindow) {
  ReferenceProfile p;
  EXPECT_EQ(p.at(30.0, 0), 4.0);
  EXPECT_EQ(p.at(10.0, 0), 0.0);
  EXPECT_EQ(p.at(40.5, 0), 0.0);
  EXPECT_EQ(p.at(22.5, 0), 4.0);
}

TEST(Reference, StepEventAppliesFromItsIndex) {
  ReferenceProfile p;
  p.events = {{5000, 5.5}};
  EXPECT_EQ(p.at(30.0, 4999), 4.0);
  EXPECT_EQ(p.at(30.0, 5000), 5.5);
  EXPECT_EQ(p.at(30.0, 90000), 5.5);
}

TEST(Reference, ZeroOutsideWindowForEveryStep) {
  ReferenceProfile p;
  p.events = {{10, 5.5}, {20, 4.5}};
  for (std::int64_t k = 0; k < 40; ++k) {
    for (double th = 0; th < 45; th += 0.5) {
      if (!p.in_window(th)) {
        EXPECT_EQ(p.at(th, k), 0.0);
      }
    }
  }
}

TEST(Reference, ValidationRejectsBadWindow) {
  ReferenceProfile p;
  p.theta_on = 30;
  p.theta_off = 20;
  EXPECT_THROW(p.validate(45.0), ValidationError);
  p = ReferenceProfile{};
  p.amplitude = -1;
  EXPECT_THROW(p.validate(45.0), ValidationError);
}

TEST(WrapAngle, MapsIntoOnePitch) {
  EXPECT_DOUBLE_EQ(wrap_angle(46.0, 45.0), 1.0);
  EXPECT_DOUBLE_EQ(wrap_angle(-1.0, 45.0), 44.0);
  EXPECT_DOUBLE_EQ(wrap_angle(45.0, 45.0), 0.0);
}
