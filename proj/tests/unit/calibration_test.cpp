#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gridflow/calibration.hpp"
#include "gridflow/error.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/refsolver.hpp"
#include "test_support.hpp"

using namespace gridflow;

namespace {

struct Case14 {
  Network net = gridflow::testing::load_bundled("case14");
  AdmittanceMatrix y = build_ybus(net);
  DemandVector d = nominal_demand(net);
  OpfSolution label;
  Case14() {
    const AcopfResult r = solve_acopf(net, y, d);
    EXPECT_TRUE(r.converged());
    label = r.solution;
  }
};

const Case14& case14() {
  static const Case14 c;
  return c;
}

OpfSolution noisy(const OpfSolution& s, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  OpfSolution out = s;
  for (int i = 0; i < out.voltage.size(); ++i) {
    out.voltage.vm(i) += g(rng);
    out.voltage.va(i) += g(rng);
  }
  return out;
}

void expect_within_boxes(const Network& net, const OpfSolution& s) {
  for (const Bus& b : net.buses()) {
    EXPECT_GE(s.voltage.vm(b.id), b.v_min);
    EXPECT_LE(s.voltage.vm(b.id), b.v_max);
    EXPECT_GE(s.voltage.va(b.id), b.ang_min);
    EXPECT_LE(s.voltage.va(b.id), b.ang_max);
  }
  for (const Generator& g : net.generators()) {
    EXPECT_GE(s.gen.pg(g.bus), g.p_min);
    EXPECT_LE(s.gen.pg(g.bus), g.p_max);
    EXPECT_GE(s.gen.qg(g.bus), g.q_min);
    EXPECT_LE(s.gen.qg(g.bus), g.q_max);
  }
  for (int i : net.load_buses()) {
    EXPECT_EQ(s.gen.pg(i), 0.0);
    EXPECT_EQ(s.gen.qg(i), 0.0);
  }
}

}  // namespace

TEST(Clip, ScalarExamples) {
  EXPECT_EQ(clip_scalar(0.5, 0, 1), 0.5);
  EXPECT_EQ(clip_scalar(-2, 0, 1), 0.0);
  EXPECT_EQ(clip_scalar(7, 0, 1), 1.0);
  EXPECT_EQ(clip_scalar(3, 3, 3), 3.0);
  EXPECT_THROW(clip_scalar(0.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Clip, ScalarIdempotentAndInRange) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 10000; ++k) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    const double z = u(rng);
    const double c = clip_scalar(z, lo, hi);
    EXPECT_GE(c, lo);
    EXPECT_LE(c, hi);
    EXPECT_EQ(clip_scalar(c, lo, hi), c);
    if (z >= lo && z <= hi) EXPECT_EQ(c, z);
  }
}

TEST(Clip, VoltageExamples) {
  Bus b;
  b.v_min = 0.94;
  b.v_max = 1.06;
  const Complex inside = std::polar(1.0, 0.1);
  EXPECT_LT(std::abs(clip_voltage(inside, b) - inside), 1e-15);
  EXPECT_LT(std::abs(clip_voltage(std::polar(1.10, 0.1), b) - std::polar(1.06, 0.1)), 1e-15);
  EXPECT_LT(std::abs(clip_voltage(std::polar(1.0, 2.0), b) - std::polar(1.0, std::numbers::pi / 2)), 1e-15);
  const VoltageClip both = clip_voltage_detailed(std::polar(0.5, -2.0), b);
  EXPECT_TRUE(both.magnitude_clipped);
  EXPECT_TRUE(both.angle_clipped);
  EXPECT_DOUBLE_EQ(both.magnitude, 0.94);
  EXPECT_DOUBLE_EQ(both.angle, -std::numbers::pi / 2);
}

TEST(Clip, VoltageAngleBranchFollowsHint) {
  Bus b;
  b.ang_min = 2.5;
  b.ang_max = 3.5;
  // arg() reads this phasor as 3.28 - 2pi; the branch nearest the hint is 3.28, inside the box.
  const VoltageClip c = clip_voltage_detailed(std::polar(1.0, 3.28), b, 3.0);
  EXPECT_FALSE(c.angle_clipped);
  EXPECT_NEAR(c.angle, 3.28, 1e-12);
}

TEST(CalibrationConfig, Validation) {
  CalibrationConfig c;
  EXPECT_NO_THROW(c.validate());
  c.rho = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Calibrate, SolverLabelIsFixedPoint) {
  const auto& c = case14();
  const CalibrationOutcome out = calibrate(c.net, c.y, c.d, c.label);
  EXPECT_TRUE(out.converged);
  EXPECT_EQ(out.epochs_used, 0);
  ASSERT_EQ(out.trace.size(), 1u);
  EXPECT_EQ(out.solution.voltage.vm, c.label.voltage.vm);
  EXPECT_EQ(out.solution.voltage.va, c.label.voltage.va);
  EXPECT_EQ(out.solution.gen.pg, c.label.gen.pg);
  EXPECT_EQ(out.solution.gen.qg, c.label.gen.qg);
  EXPECT_EQ(out.clip_events.total(), 0);
}

TEST(Calibrate, NoisyCandidateInvariants) {
  const auto& c = case14();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const OpfSolution cand = noisy(c.label, 0.01, seed);
    const CalibrationOutcome out = calibrate(c.net, c.y, c.d, cand);
    expect_within_boxes(c.net, out.solution);
    EXPECT_LE(out.epochs_used, 100);
    ASSERT_EQ(out.trace.size(), static_cast<std::size_t>(out.epochs_used + 1));
    for (std::size_t k = 0; k < out.trace.size(); ++k) EXPECT_EQ(out.trace[k].epoch, static_cast<int>(k));
    const ResidualReport fresh = residual_check(c.net, c.y, out.solution.voltage, c.d, out.solution.gen);
    EXPECT_NEAR(out.trace.back().mean_abs, fresh.mean_abs, 1e-15);
    EXPECT_NEAR(out.trace.back().max_abs, fresh.max_abs, 1e-15);
    EXPECT_EQ(out.converged, out.trace.back().mean_abs <= 1e-6);
    EXPECT_NEAR(out.solution.objective, generation_cost(c.net, out.solution.gen), 1e-9);
    EXPECT_EQ(out.solution.source, SolutionSource::calibrated);
  }
}

TEST(Calibrate, Deterministic) {
  const auto& c = case14();
  const OpfSolution cand = noisy(c.label, 0.02, 42);
  const CalibrationOutcome a = calibrate(c.net, c.y, c.d, cand);
  const CalibrationOutcome b = calibrate(c.net, c.y, c.d, cand);
  EXPECT_EQ(a.epochs_used, b.epochs_used);
  EXPECT_EQ(a.solution.voltage.vm, b.solution.voltage.vm);
  EXPECT_EQ(a.solution.voltage.va, b.solution.voltage.va);
  EXPECT_EQ(a.solution.gen.pg, b.solution.gen.pg);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) EXPECT_EQ(a.trace[k].mean_abs, b.trace[k].mean_abs);
}

TEST(Calibrate, GeneratorBusesBalancedWithoutClipping) {
  // Relax the dispatch limits so step (b) never clips; generator buses then balance exactly.
  const auto& c = case14();
  std::vector<Generator> gens = c.net.generators();
  for (Generator& g : gens) {
    g.p_min = -50.0;
    g.p_max = 50.0;
    g.q_min = -50.0;
    g.q_max = 50.0;
  }
  const Network wide = Network::create("wide", c.net.base_mva(), c.net.buses(), gens, c.net.branches());
  CalibrationConfig cfg;
  cfg.max_epochs = 3;
  cfg.rho = 1e-300;
  const CalibrationOutcome out = calibrate(wide, c.y, c.d, noisy(c.label, 0.01, 7), cfg);
  EXPECT_EQ(out.clip_events.pg + out.clip_events.qg, 0);
  const ResidualReport r = residual_check(wide, c.y, out.solution.voltage, c.d, out.solution.gen);
  for (int b : wide.generator_buses()) EXPECT_LT(std::abs(r.per_bus_mismatch(b)), 1e-12);
}

TEST(Calibrate, EntryProjectionAndPinnedReference) {
  const auto& c = case14();
  OpfSolution cand = c.label;
  cand.voltage.vm(4) = 1.5;
  cand.gen.pg(c.net.reference_bus()) = 100.0;
  CalibrationConfig cfg;
  cfg.pin_reference_angle = true;
  const CalibrationOutcome out = calibrate(c.net, c.y, c.d, cand, cfg);
  EXPECT_GE(out.trace.front().clips.vm, 1);
  EXPECT_GE(out.trace.front().clips.pg, 1);
  expect_within_boxes(c.net, out.solution);
  EXPECT_EQ(out.solution.voltage.va(c.net.reference_bus()), c.label.voltage.va(c.net.reference_bus()));
}

TEST(Calibrate, MaxStopMetricIsStricter) {
  const auto& c = case14();
  const OpfSolution cand = noisy(c.label, 0.01, 3);
  CalibrationConfig mean_cfg, max_cfg;
  max_cfg.stop_metric = StopMetric::max;
  const CalibrationOutcome a = calibrate(c.net, c.y, c.d, cand, mean_cfg);
  const CalibrationOutcome b = calibrate(c.net, c.y, c.d, cand, max_cfg);
  EXPECT_GE(b.epochs_used, a.epochs_used);
  if (b.converged) EXPECT_LE(b.trace.back().max_abs, 1e-6);
}

TEST(Calibrate, RejectsMismatchedAndProjectsZeroMagnitude) {
  const auto& c = case14();
  OpfSolution bad = c.label;
  bad.voltage.vm.resize(3);
  EXPECT_THROW(calibrate(c.net, c.y, c.d, bad), SchemaError);
  // v_min > 0 is enforced by the network, so entry projection lifts a zero magnitude off the singularity
  OpfSolution zero = c.label;
  const int bus = c.net.load_buses().front();
  zero.voltage.vm(bus) = 0.0;
  const CalibrationOutcome out = calibrate(c.net, c.y, c.d, zero);
  EXPECT_GE(out.solution.voltage.vm(bus), c.net.bus(bus).v_min);
  EXPECT_TRUE(std::isfinite(out.trace.back().mean_abs));
}

TEST(Calibrate, TraceCsv) {
  const auto& c = case14();
  const CalibrationOutcome out = calibrate(c.net, c.y, c.d, noisy(c.label, 0.01, 1));
  std::ostringstream os;
  write_trace_csv(os, out);
  const std::string text = os.str();
  EXPECT_EQ(text.rfind("epoch,mean_abs,max_abs,clip_events\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), out.trace.size() + 1);
}
