#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridflow/neural.hpp"

namespace gridflow {

enum class Optimizer { sgd, adam };

struct TrainConfig {
  int epochs = 300;
  int batch_size = 512;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_decay = 0.5;   ///< multiplied in every `lr_decay_every` epochs
  int lr_decay_every = 100;
  LossMode loss_mode = LossMode::physics_informed;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;  ///< 0 disables model selection

  void validate() const;  ///< throws std::invalid_argument
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  LossBreakdown train;
  LossBreakdown validation;  ///< zero when no validation split
};

struct TrainResult {
  Model model;  ///< best-validation snapshot (last epoch without validation)
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  bool diverged = false;
};

/// Fits the input normaliser on the training portion, then runs mini-batch training.
/// Deterministic for a fixed config; stops early with the last finite snapshot if the loss
/// becomes non-finite.
TrainResult train(const Model& initial, const Network& network, const AdmittanceMatrix& ybus,
                  const std::vector<LabeledSample>& train_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// One scenario's prediction: bounded voltages plus power-flow dispatch (unclipped).
struct Prediction {
  int scenario_id = 0;
  OpfSolution solution;
};

std::vector<Prediction> predict(const Model& model, const Network& network, const AdmittanceMatrix& ybus,
                                const std::vector<LabeledSample>& samples);

struct EvalMetrics {
  int count = 0;
  double v_mse = 0.0;
  double phi_mse = 0.0;
  double pg_mse = 0.0;
  double qg_mse = 0.0;
  double feasibility = 0.0;      ///< mean over scenarios of the mean bus mismatch
  double optimality_gap = 0.0;   ///< mean of (C - C*) / C*, dispatch clipped to its limits for costing
};

/// Cost of a solution with P_G and Q_G clipped to their limits.
double clipped_cost(const Network& network, const GenSetpoints& gen);

/// Metrics of `predictions` against the labels with matching scenario ids.
EvalMetrics compute_metrics(const Network& network, const AdmittanceMatrix& ybus,
                            const std::vector<Prediction>& predictions, const std::vector<LabeledSample>& labels);

EvalMetrics evaluate(const Model& model, const Network& network, const AdmittanceMatrix& ybus,
                     const std::vector<LabeledSample>& test_set);

/// Predictions CSV: scenario_id, vm_1..vm_n, va_1..va_n, pg_<bus>, qg_<bus>.
std::vector<std::string> prediction_columns(const Network& network);
void write_predictions_csv(std::ostream& out, const Network& network, const std::vector<Prediction>& predictions);
/// Reads predictions and recomputes objective/feasibility against the demands of `labels`.
std::vector<Prediction> read_predictions_csv(std::istream& in, const Network& network, const AdmittanceMatrix& ybus,
                                             const std::vector<LabeledSample>& labels, SolutionSource source);

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace gridflow
