#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gridflow/error.hpp"
#include "gridflow/grid_model.hpp"
#include "gridflow/refsolver.hpp"
#include "gridflow/samples.hpp"

namespace gridflow {

struct PerturbationRange {
  double low = 0.8;
  double high = 1.2;
};

enum class PerturbationMode {
  per_bus,  ///< independent factors for every bus and for P and Q
  global,   ///< one factor per scenario shared by every bus, P and Q
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  std::string case_name;
  int sample_count = 0;
  PerturbationRange range;
  PerturbationMode mode = PerturbationMode::per_bus;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int schema_version = kSchemaVersion;
  std::vector<std::string> columns;

  void validate() const;  ///< throws ValidationError
};

std::vector<DemandVector> sample_demands(const Network& network, int count, PerturbationRange range,
                                         std::uint64_t seed, PerturbationMode mode = PerturbationMode::per_bus);

/// Per-scenario solver record, emitted as one JSON line.
struct ScenarioDiagnostic {
  int scenario = 0;  ///< index into the sampled demand list
  int scenario_id = -1;  ///< id assigned when accepted, -1 otherwise
  SolveStatus status = SolveStatus::iteration_limit;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double mean_residual = 0.0;
  int overloaded_branches = 0;
  bool accepted = false;
};

std::string to_json_line(const ScenarioDiagnostic& d);

struct GenerationOptions {
  SolverConfig solver;
  PerturbationMode mode = PerturbationMode::per_bus;
  int jobs = 1;
  double min_yield = 0.5;
  std::function<void(int done, int total)> progress;  ///< optional; calls are serialised
};

struct GeneratedDataset {
  std::vector<LabeledSample> samples;
  std::vector<ScenarioDiagnostic> diagnostics;
  int rejected = 0;
};

/// Thrown when fewer than `min_yield` of the sampled scenarios solve; carries the diagnostics.
class YieldError : public ValidationError {
 public:
  YieldError(const std::string& what, std::vector<ScenarioDiagnostic> diagnostics)
      : ValidationError(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<ScenarioDiagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<ScenarioDiagnostic> diagnostics_;
};

/// Samples demands and labels each with solve_acopf, warm-started from the nominal optimum.
/// Failed scenarios are dropped; accepted samples get dense ids in sampling order.
GeneratedDataset generate_dataset(const Network& network, int count, PerturbationRange range,
                                  std::uint64_t seed, const GenerationOptions& options = {});

/// Seeded shuffle, then the first round(fraction * size) samples go to train.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(const std::vector<LabeledSample>& samples,
                                                                        double train_fraction, std::uint64_t seed);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Writes `manifest.json` and `samples.csv` into `dir` (created if needed).
void write_dataset(const std::filesystem::path& dir, const Network& network, const DatasetManifest& manifest,
                   const std::vector<LabeledSample>& samples);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<LabeledSample> samples;
};

/// Reads a dataset directory (or a samples CSV next to its manifest). Every row is re-validated;
/// any rejected row is an error.
LoadedDataset read_dataset(const std::filesystem::path& path, const Network& network);

}  // namespace gridflow
