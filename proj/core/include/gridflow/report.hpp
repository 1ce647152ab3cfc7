#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gridflow/calibration.hpp"
#include "gridflow/train.hpp"

namespace gridflow {

struct CalibrationRecord {
  int scenario_id = 0;
  CalibrationOutcome outcome;
};

std::vector<CalibrationRecord> calibrate_all(const Network& network, const AdmittanceMatrix& ybus,
                                             const std::vector<Prediction>& candidates,
                                             const std::vector<LabeledSample>& labels,
                                             const CalibrationConfig& config, int jobs = 1);

/// Calibrated solutions in the predictions CSV layout.
std::vector<Prediction> calibrated_predictions(const std::vector<CalibrationRecord>& records);

/// `calibration.csv`: scenario_id, converged, epochs_used, final_mean_abs, final_max_abs, clip_vm..clip_qg.
void write_calibration_summary_csv(std::ostream& out, const std::vector<CalibrationRecord>& records);
/// `traces.csv`: scenario_id, epoch, mean_abs, max_abs, clip_events (one row per trace entry).
void write_traces_csv(std::ostream& out, const std::vector<CalibrationRecord>& records);

/// Summary and traces read back; solutions are attached from `calibrated` by scenario id.
std::vector<CalibrationRecord> read_calibration_csv(std::istream& summary, std::istream& traces,
                                                    const std::vector<Prediction>& calibrated);

struct EpochStats {
  double mean = 0.0;
  int min = 0;
  int max = 0;
};

struct RunReport {
  std::string case_name;
  std::string method;
  long parameter_count = 0;
  double rho = 1e-6;
  int scenarios = 0;
  EvalMetrics predicted;   ///< stage-one outputs, all scenarios
  EvalMetrics calibrated;  ///< calibrated outputs, all scenarios
  double convergence_rate = 0.0;
  int converged = 0;
  double feasibility_post_converged = 0.0;  ///< mean final residual over converged scenarios
  double gap_pre_converged = 0.0;           ///< stage-one gap over the converged subset
  double gap_post_converged = 0.0;          ///< calibrated gap over the converged subset
  EpochStats epochs;                        ///< over converged scenarios
  std::map<std::string, double> timings_s;
};

std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& text);

/// Curve rows (epoch, mean, min, max) over converged scenarios; a scenario that stopped earlier
/// contributes its final residual to later epochs.
struct CurvePoint {
  int epoch = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};
std::vector<CurvePoint> convergence_curve(const std::vector<CalibrationRecord>& records);

RunReport build_report(const Network& network, const AdmittanceMatrix& ybus, const std::vector<LabeledSample>& labels,
                       const std::vector<Prediction>& predictions, const std::vector<CalibrationRecord>& records,
                       const std::string& method, long parameter_count, double rho);

/// Writes report.json, table2.csv and curves.csv into `dir`.
void emit_report(const std::filesystem::path& dir, const RunReport& report,
                 const std::vector<CalibrationRecord>& records);

}  // namespace gridflow
