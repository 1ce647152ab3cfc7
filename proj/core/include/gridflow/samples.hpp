#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gridflow/grid_model.hpp"
#include "gridflow/solution.hpp"

namespace gridflow {

/// Demand input paired with its optimal solution label.
struct LabeledSample {
  int scenario_id = 0;
  DemandVector demand;
  OpfSolution solution;
};

/// Header of the samples CSV: scenario_id, pd_1..pd_n, qd_1..qd_n, vm_1..vm_n, va_1..va_n,
/// pg_<bus> and qg_<bus> for each generator bus (external numbers), objective.
std::vector<std::string> sample_columns(const Network& network);

void write_samples_csv(std::ostream& out, const Network& network, const std::vector<LabeledSample>& samples);

/// One parsed row; `error` is set when the row could not be decoded.
struct RawSampleRow {
  LabeledSample sample;
  std::string error;
};

/// Parses a samples CSV without physics validation. Throws SchemaError on a header mismatch.
std::vector<RawSampleRow> read_samples_csv(std::istream& in, const Network& network);

}  // namespace gridflow
