#pragma once

#include <string_view>

#include "gridflow/grid_model.hpp"
#include "gridflow/state.hpp"

namespace gridflow {

enum class SolutionSource { internal_solver, imported, nn, calibrated };

std::string_view to_string(SolutionSource source);

struct FeasibilitySummary {
  double mean_abs = 0.0;
  double max_abs = 0.0;
};

/// Full ACOPF decision vector {|V|, angle, P_G, Q_G} with its cost in $/hr.
struct OpfSolution {
  VoltageProfile voltage;
  GenSetpoints gen;
  double objective = 0.0;
  FeasibilitySummary feasibility;
  SolutionSource source = SolutionSource::internal_solver;
};

/// Assembles a solution, filling objective and feasibility from the network equations.
OpfSolution make_solution(const Network& network, const AdmittanceMatrix& ybus, VoltageProfile voltage,
                          GenSetpoints gen, const DemandVector& demand, SolutionSource source);

/// Largest violation of the box constraints on P_G, Q_G, |V| and angle (0 when all hold).
double box_violation(const Network& network, const OpfSolution& solution);

}  // namespace gridflow
