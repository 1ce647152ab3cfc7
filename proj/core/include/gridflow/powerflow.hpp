#pragma once

#include <string>
#include <vector>

#include "gridflow/grid_model.hpp"
#include "gridflow/state.hpp"

namespace gridflow {

/// Complex mismatch (P_G - P_D + j(Q_G - Q_D)) - S(V) at every bus.
struct ResidualReport {
  Eigen::VectorXcd per_bus_mismatch;
  double mean_abs = 0.0;
  double max_abs = 0.0;
};

struct PFResult {
  VoltageProfile voltage;
  GenSetpoints gen;
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;
  std::string message;
};

/// Net complex injection S_i = V_i * sum_j conj(Y_ij V_j) at each bus.
Eigen::VectorXcd bus_injections(const AdmittanceMatrix& ybus, const VoltageProfile& v);
Eigen::VectorXcd bus_injections(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v);

/// Generator-bus dispatch that balances every generator bus at `v` (no clipping).
GenSetpoints recover_generation(const Network& network, const AdmittanceMatrix& ybus,
                                const VoltageProfile& v, const DemandVector& demand);

/// Demand implied by `gen` and the injections at `v`: P_D = P_G - Re S, Q_D = Q_G - Im S.
DemandVector reconstruct_demand(const Network& network, const AdmittanceMatrix& ybus,
                                const VoltageProfile& v, const GenSetpoints& gen);

ResidualReport residual_check(const Network& network, const AdmittanceMatrix& ybus,
                              const VoltageProfile& v, const DemandVector& demand,
                              const GenSetpoints& gen);
ResidualReport residual_check(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v,
                              const DemandVector& demand, const GenSetpoints& gen);

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
};

/// Case-data start point: flat at load buses, generator setpoint magnitudes, zero angles except
/// at the reference bus, which keeps its case angle as the datum.
VoltageProfile case_start(const Network& network);

/// Dispatch stored with the case (p_setpoint/q_setpoint per generator bus).
GenSetpoints case_dispatch(const Network& network);

/// Polar Newton-Raphson on the slack/PV/PQ partition. PV magnitudes and the slack voltage are
/// taken from `init`; PV active power from `dispatch`. The returned generation covers the
/// slack P/Q and PV Q computed at the solution.
PFResult solve_newton_raphson(const Network& network, const AdmittanceMatrix& ybus,
                              const DemandVector& demand, const VoltageProfile& init,
                              const GenSetpoints& dispatch, const PowerFlowOptions& options = {});

/// Classical Gauss-Seidel power flow on the same partition (full sweeps in bus order).
PFResult solve_gauss_seidel(const Network& network, const AdmittanceMatrix& ybus,
                            const DemandVector& demand, const VoltageProfile& init,
                            const GenSetpoints& dispatch,
                            const PowerFlowOptions& options = {1e-8, 10000});

/// Single-bus Gauss-Seidel update for a bus with net injection `injection`:
///   V_i <- (conj(S_i) / conj(V_i) - sum_{j != i} Y_ij V_j) / Y_ii.
/// Throws NumericalError on a zero diagonal or zero current voltage.
Complex gauss_seidel_update(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v,
                            Complex injection, int bus);

/// Load-bus form: the injection is -(P_D + j Q_D). The printed negative-demand numerator
/// (-P_D + j Q_D) / V_i equals conj(S_i) / V_i for S_i = -(P_D + j Q_D); the textbook update
/// divides by conj(V_i), which is what makes exact power-flow solutions stationary.
Complex gauss_seidel_update(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v,
                            const DemandVector& demand, int bus);

struct BranchFlow {
  double from_end = 0.0;  ///< |V_f (V_f - V_t)^* Y_ft^*|, per-unit
  double to_end = 0.0;    ///< |V_t (V_t - V_f)^* Y_tf^*|, per-unit
  Complex pi_from;        ///< full pi-model flow leaving the from bus (diagnostic)
  Complex pi_to;          ///< full pi-model flow leaving the to bus (diagnostic)
  bool violated = false;  ///< either end exceeds s_max (when s_max > 0)
};

std::vector<BranchFlow> branch_flows(const Network& network, const AdmittanceMatrix& ybus,
                                     const VoltageProfile& v);

/// Sum of quadratic generator costs in $/hr, dispatch converted to MW.
double generation_cost(const Network& network, const GenSetpoints& gen);

}  // namespace gridflow
