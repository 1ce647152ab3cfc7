#include "gridflow/solution.hpp"

#include <algorithm>

#include "gridflow/powerflow.hpp"

namespace gridflow {

std::string_view to_string(SolutionSource source) {
  switch (source) {
    case SolutionSource::internal_solver:
      return "internal_solver";
    case SolutionSource::imported:
      return "imported";
    case SolutionSource::nn:
      return "nn";
    case SolutionSource::calibrated:
      return "calibrated";
  }
  return "imported";
}

OpfSolution make_solution(const Network& network, const AdmittanceMatrix& ybus, VoltageProfile voltage,
                          GenSetpoints gen, const DemandVector& demand, SolutionSource source) {
  OpfSolution s;
  const ResidualReport r = residual_check(network, ybus, voltage, demand, gen);
  s.voltage = std::move(voltage);
  s.gen = std::move(gen);
  s.objective = generation_cost(network, s.gen);
  s.feasibility = {r.mean_abs, r.max_abs};
  s.source = source;
  return s;
}

double box_violation(const Network& network, const OpfSolution& solution) {
  auto outside = [](double z, double lo, double hi) { return std::max({0.0, lo - z, z - hi}); };
  double worst = 0.0;
  for (const Bus& b : network.buses()) {
    worst = std::max(worst, outside(solution.voltage.vm(b.id), b.v_min, b.v_max));
    worst = std::max(worst, outside(solution.voltage.va(b.id), b.ang_min, b.ang_max));
    if (!network.is_generator_bus(b.id)) {
      worst = std::max({worst, std::abs(solution.gen.pg(b.id)), std::abs(solution.gen.qg(b.id))});
    }
  }
  for (const Generator& g : network.generators()) {
    worst = std::max(worst, outside(solution.gen.pg(g.bus), g.p_min, g.p_max));
    worst = std::max(worst, outside(solution.gen.qg(g.bus), g.q_min, g.q_max));
  }
  return worst;
}

}  // namespace gridflow
