#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gridflow/grid_model.hpp"
#include "gridflow/samples.hpp"
#include "gridflow/solution.hpp"

namespace gridflow {

struct SolverConfig {
  double feas_tol = 1e-6;  ///< mean bus mismatch magnitude, per-unit
  double opt_tol = 1e-6;   ///< projected-gradient norm of the scaled Lagrangian
  int max_outer = 80;
  int max_inner = 60;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;

  void validate() const;  ///< throws std::invalid_argument
};

enum class SolveStatus { converged, iteration_limit, numerical_failure };

std::string_view to_string(SolveStatus status);

struct SolveDiagnostics {
  SolveStatus status = SolveStatus::iteration_limit;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double mean_residual = 0.0;
  double max_residual = 0.0;
  double projected_gradient = 0.0;
  double penalty = 0.0;
  int overloaded_branches = 0;  ///< branch ratings are checked after the solve, not enforced
};

struct AcopfResult {
  OpfSolution solution;
  SolveDiagnostics diagnostics;

  bool converged() const noexcept { return diagnostics.status == SolveStatus::converged; }
};

/// Local ACOPF solve by the augmented-Lagrangian method: power balance enters through
/// multipliers and a quadratic penalty, the box constraints on P_G, Q_G, |V| and angle are kept
/// by projection, and each subproblem is minimised with projected Newton steps on the exact
/// Hessian. The reference angle is held at its case value. `warm_start` (e.g. the nominal
/// solution) seeds the primal point.
AcopfResult solve_acopf(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand,
                        const SolverConfig& config = {}, const OpfSolution* warm_start = nullptr);

struct ImportDiagnostic {
  int row = 0;  ///< 1-based data row (header excluded)
  int scenario_id = -1;
  std::string reason;
};

struct ImportResult {
  std::vector<LabeledSample> samples;
  std::vector<ImportDiagnostic> rejected;
};

/// Reads a dataset CSV and keeps rows whose label balances (mean mismatch < 1e-4) and satisfies
/// every box within 1e-6. Throws SchemaError on header/dimension mismatch or an empty file.
ImportResult import_labels(const std::string& path, const Network& network);
ImportResult import_labels(std::istream& in, const Network& network);

}  // namespace gridflow
