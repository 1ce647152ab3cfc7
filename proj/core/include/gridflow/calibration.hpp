#pragma once

#include <iosfwd>
#include <vector>

#include "gridflow/grid_model.hpp"
#include "gridflow/solution.hpp"

namespace gridflow {

enum class StopMetric { mean, max };

struct CalibrationConfig {
  double rho = 1e-6;  ///< stop once the residual metric is at or below this (per-unit)
  int max_epochs = 100;
  bool record_trace = true;
  StopMetric stop_metric = StopMetric::mean;
  /// Keep the reference-bus angle fixed wherever calibration would otherwise move it.
  bool pin_reference_angle = false;
  /// Extension: a generator bus whose P (Q) injection was clipped in the previous epoch joins
  /// the voltage sweep with its clipped injection, freeing its angle (magnitude). This is the
  /// PV-to-PQ switching used by classical Gauss-Seidel power flow; off by default.
  bool release_clipped_generators = false;

  void validate() const;  ///< throws std::invalid_argument
};

struct ClipEvents {
  int vm = 0;
  int va = 0;
  int pg = 0;
  int qg = 0;

  int total() const noexcept { return vm + va + pg + qg; }
  ClipEvents& operator+=(const ClipEvents& o) noexcept {
    vm += o.vm;
    va += o.va;
    pg += o.pg;
    qg += o.qg;
    return *this;
  }
};

struct TraceEntry {
  int epoch = 0;
  double mean_abs = 0.0;
  double max_abs = 0.0;
  ClipEvents clips;  ///< clips applied during this epoch (entry projection for epoch 0)
};

struct CalibrationOutcome {
  OpfSolution solution;
  bool converged = false;
  int epochs_used = 0;
  std::vector<TraceEntry> trace;  ///< epochs_used + 1 entries when record_trace is set
  ClipEvents clip_events;         ///< totals over the run
};

/// max(min(z, hi), lo). Throws std::invalid_argument when lo > hi.
double clip_scalar(double z, double lo, double hi);

struct VoltageClip {
  Complex value;
  double magnitude = 0.0;
  double angle = 0.0;
  bool magnitude_clipped = false;
  bool angle_clipped = false;
};

/// Clips magnitude into [v_min, v_max] and angle into [ang_min, ang_max] independently.
/// The angle is read as the branch of arg(v) closest to `angle_hint`.
VoltageClip clip_voltage_detailed(Complex v, const Bus& bus, double angle_hint = 0.0);
Complex clip_voltage(Complex v, const Bus& bus);

/// Feasibility restoration: per epoch, sweep load-bus voltages with the Gauss-Seidel update
/// in ascending order (in place, clipped to the voltage box), then recompute and clip every
/// generator injection, then re-check the bus balance. The candidate is first projected onto
/// the box constraints, so the returned solution satisfies them whether or not it converged.
CalibrationOutcome calibrate(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand,
                             const OpfSolution& candidate, const CalibrationConfig& config = {});

/// CSV with header `epoch,mean_abs,max_abs,clip_events`.
void write_trace_csv(std::ostream& out, const CalibrationOutcome& outcome);

}  // namespace gridflow
