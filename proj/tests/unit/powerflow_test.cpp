#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gridflow/error.hpp"
#include "gridflow/powerflow.hpp"
#include "test_support.hpp"

using namespace gridflow;
using gridflow::testing::load_bundled;

namespace {

VoltageProfile random_profile(const Network& net, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> m(0.9, 1.1), a(-0.5, 0.5);
  VoltageProfile v = VoltageProfile::flat(net.size());
  for (int i = 0; i < net.size(); ++i) {
    v.vm(i) = m(rng);
    v.va(i) = a(rng);
  }
  return v;
}

// Independent branch-by-branch evaluation of the complex power entering the network.
Complex total_losses(const Network& net, const VoltageProfile& vp) {
  const Eigen::VectorXcd v = vp.phasors();
  Complex total = 0.0;
  for (const Branch& br : net.branches()) {
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex t = std::polar(br.tap, br.shift);
    const Complex vf = v(br.from_bus), vt = v(br.to_bus);
    const Complex i_from = (ys / (br.tap * br.tap) + Complex(0, br.b_charging / 2)) * vf - ys / std::conj(t) * vt;
    const Complex i_to = (ys + Complex(0, br.b_charging / 2)) * vt - ys / t * vf;
    total += vf * std::conj(i_from) + vt * std::conj(i_to);
  }
  for (const Bus& b : net.buses()) total += std::norm(v(b.id)) * Complex(b.shunt_g, -b.shunt_b);
  return total;
}

}  // namespace

TEST(PowerFlow, NewtonMatchesExternalReference) {
  const auto& fx = gridflow::testing::reference_fixture();
  for (const char* name : {"case14", "case118"}) {
    const Network net = load_bundled(name);
    const AdmittanceMatrix y = build_ybus(net);
    const DemandVector d = nominal_demand(net);
    const PFResult r = solve_newton_raphson(net, y, d, case_start(net), case_dispatch(net));
    ASSERT_TRUE(r.converged) << name << ": " << r.message;
    EXPECT_LT(r.final_residual, 1e-8);
    const auto& pf = fx["cases"][name]["pf"];
    double dv = 0.0, da = 0.0, dp = 0.0;
    for (int i = 0; i < net.size(); ++i) {
      dv = std::max(dv, std::abs(r.voltage.vm(i) - pf["vm"][static_cast<std::size_t>(i)].get<double>()));
      da = std::max(da, std::abs(r.voltage.va(i) * 180.0 / std::numbers::pi -
                                 pf["va_deg"][static_cast<std::size_t>(i)].get<double>()));
    }
    const auto& gb = net.generator_buses();
    for (std::size_t k = 0; k < gb.size(); ++k)
      dp = std::max(dp, std::abs(r.gen.pg(gb[k]) * net.base_mva() - pf["pg_mw"][k].get<double>()));
    EXPECT_LT(dv, 1e-8) << name;
    EXPECT_LT(da, 1e-6) << name;
    EXPECT_LT(dp, 1e-6) << name;
  }
}

TEST(PowerFlow, PublishedCaseVoltagesAreCloseButNotExact) {
  // The voltages stored in the case files are rounded; they agree with a solved power flow
  // to a few 1e-3 per unit only.
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const PFResult r = solve_newton_raphson(net, y, nominal_demand(net), case_start(net), case_dispatch(net));
  ASSERT_TRUE(r.converged);
  double worst = 0.0;
  for (const Bus& b : net.buses()) worst = std::max(worst, std::abs(r.voltage.vm(b.id) - b.vm_case));
  EXPECT_LT(worst, 5e-3);
  EXPECT_GT(worst, 1e-6);
}

TEST(PowerFlow, GaussSeidelAgreesWithNewton) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  const PFResult nr = solve_newton_raphson(net, y, d, case_start(net), case_dispatch(net));
  VoltageProfile flat = VoltageProfile::flat(net.size());
  for (int b : net.generator_buses()) flat.vm(b) = net.generator_at(b)->v_setpoint;
  const PFResult gs = solve_gauss_seidel(net, y, d, flat, case_dispatch(net));
  ASSERT_TRUE(nr.converged);
  ASSERT_TRUE(gs.converged) << gs.message;
  EXPECT_LT((nr.voltage.phasors() - gs.voltage.phasors()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(PowerFlow, ExactSolutionIsGaussSeidelFixedPoint) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  const PFResult nr = solve_newton_raphson(net, y, d, case_start(net), case_dispatch(net));
  const Eigen::VectorXcd v = nr.voltage.phasors();
  for (int i : net.load_buses()) EXPECT_LT(std::abs(gauss_seidel_update(y, v, d, i) - v(i)), 1e-9);
}

TEST(PowerFlow, GaussSeidelRejectsDegenerateInput) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  Eigen::VectorXcd v = VoltageProfile::flat(net.size()).phasors();
  v(4) = 0.0;
  EXPECT_THROW(gauss_seidel_update(y, v, nominal_demand(net), 4), NumericalError);
}

TEST(PowerFlow, InjectionsConserveLosses) {
  std::mt19937_64 rng(3);
  for (const char* name : {"case14", "case118"}) {
    const Network net = load_bundled(name);
    const AdmittanceMatrix y = build_ybus(net);
    for (int trial = 0; trial < 20; ++trial) {
      const VoltageProfile v = random_profile(net, rng);
      const Complex sum = bus_injections(y, v).sum();
      EXPECT_LT(std::abs(sum - total_losses(net, v)), 1e-9) << name;
    }
  }
}

TEST(PowerFlow, InjectionsAreHomogeneousOfDegreeTwo) {
  std::mt19937_64 rng(5);
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  for (double alpha : {0.5, 0.97, 1.3}) {
    const Eigen::VectorXcd v = random_profile(net, rng).phasors();
    const Eigen::VectorXcd s = bus_injections(y, v);
    const Eigen::VectorXcd scaled = bus_injections(y, Eigen::VectorXcd(alpha * v));
    EXPECT_LT((scaled - alpha * alpha * s).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PowerFlow, RecoverReconstructIdentities) {
  std::mt19937_64 rng(9);
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  for (int trial = 0; trial < 50; ++trial) {
    const VoltageProfile v = random_profile(net, rng);
    const GenSetpoints g = recover_generation(net, y, v, d);
    const DemandVector back = reconstruct_demand(net, y, v, g);
    const ResidualReport r = residual_check(net, y, v, d, g);
    for (int b : net.generator_buses()) {
      EXPECT_NEAR(back.pd(b), d.pd(b), 1e-12);
      EXPECT_NEAR(back.qd(b), d.qd(b), 1e-12);
      EXPECT_LT(std::abs(r.per_bus_mismatch(b)), 1e-12);
    }
    for (int b : net.load_buses()) {
      EXPECT_EQ(g.pg(b), 0.0);
      EXPECT_EQ(g.qg(b), 0.0);
    }
  }
}

TEST(PowerFlow, ResidualMeanIsOverAllBuses) {
  const Network net = gridflow::testing::two_bus();
  const AdmittanceMatrix y = build_ybus(net);
  const VoltageProfile v = VoltageProfile::flat(2);
  const DemandVector d = nominal_demand(net);
  const GenSetpoints g = recover_generation(net, y, v, d);
  const ResidualReport r = residual_check(net, y, v, d, g);
  // flat profile: only charging flows, the load bus mismatch is its whole demand net of charging
  const Eigen::VectorXcd s = bus_injections(y, v);
  const double load_mismatch = std::abs(Complex(-d.pd(1), -d.qd(1)) - s(1));
  EXPECT_NEAR(r.mean_abs, load_mismatch / 2.0, 1e-15);
  EXPECT_NEAR(r.max_abs, load_mismatch, 1e-15);
}

TEST(PowerFlow, BranchFlowsAndCost) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const PFResult r = solve_newton_raphson(net, y, nominal_demand(net), case_start(net), case_dispatch(net));
  const auto flows = branch_flows(net, y, r.voltage);
  ASSERT_EQ(flows.size(), net.branches().size());
  for (const BranchFlow& f : flows) EXPECT_FALSE(f.violated);
  // cost of the stored dispatch computed by hand from the case table
  double expected = 0.0;
  for (const Generator& g : net.generators()) {
    const double mw = r.gen.pg(g.bus) * net.base_mva();
    expected += g.cost_c2 * mw * mw + g.cost_c1 * mw + g.cost_c0;
  }
  EXPECT_NEAR(generation_cost(net, r.gen), expected, 1e-9);
}
