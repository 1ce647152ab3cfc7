#include "gridflow/samples.hpp"

#include <istream>
#include <ostream>

#include "gridflow/csv.hpp"
#include "gridflow/error.hpp"

namespace gridflow {

std::vector<std::string> sample_columns(const Network& network) {
  const int n = network.size();
  std::vector<std::string> cols{"scenario_id"};
  for (const char* prefix : {"pd_", "qd_", "vm_", "va_"})
    for (int i = 0; i < n; ++i) cols.push_back(prefix + std::to_string(i + 1));
  for (const char* prefix : {"pg_", "qg_"})
    for (int b : network.generator_buses()) cols.push_back(prefix + std::to_string(network.bus(b).external_id));
  cols.emplace_back("objective");
  return cols;
}

void write_samples_csv(std::ostream& out, const Network& network, const std::vector<LabeledSample>& samples) {
  out << csv::join(sample_columns(network)) << '\n';
  const int n = network.size();
  for (const LabeledSample& s : samples) {
    out << s.scenario_id;
    auto put = [&](const Eigen::VectorXd& vec) {
      for (int i = 0; i < n; ++i) out << ',' << csv::format(vec(i));
    };
    put(s.demand.pd);
    put(s.demand.qd);
    put(s.solution.voltage.vm);
    put(s.solution.voltage.va);
    for (int b : network.generator_buses()) out << ',' << csv::format(s.solution.gen.pg(b));
    for (int b : network.generator_buses()) out << ',' << csv::format(s.solution.gen.qg(b));
    out << ',' << csv::format(s.solution.objective) << '\n';
  }
}

std::vector<RawSampleRow> read_samples_csv(std::istream& in, const Network& network) {
  const std::vector<std::string> expected = sample_columns(network);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("dataset file is empty");
  {
    const auto header = csv::split(line);
    if (header.size() != expected.size())
      throw SchemaError("dataset header has " + std::to_string(header.size()) + " columns, expected " +
                        std::to_string(expected.size()) + " for case " + network.name());
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] != expected[k])
        throw SchemaError("dataset column " + std::to_string(k + 1) + " is '" + std::string(header[k]) +
                          "', expected '" + expected[k] + "'");
  }
  const int n = network.size();
  const auto& gbus = network.generator_buses();
  std::vector<RawSampleRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    RawSampleRow row;
    LabeledSample& s = row.sample;
    s.demand = DemandVector::zero(n);
    s.solution.voltage = VoltageProfile::flat(n);
    s.solution.gen = GenSetpoints::zero(n);
    const auto fields = csv::split(line);
    if (fields.size() != expected.size()) {
      row.error = "row has " + std::to_string(fields.size()) + " fields, expected " + std::to_string(expected.size());
      csv::parse(fields.empty() ? std::string_view{} : fields[0], s.scenario_id);
      rows.push_back(std::move(row));
      continue;
    }
    if (!csv::parse(fields[0], s.scenario_id)) row.error = "bad scenario_id";
    std::size_t col = 1;
    auto take = [&](double& dst) {
      if (!csv::parse(fields[col], dst) && row.error.empty())
        row.error = "column " + expected[col] + " is not a finite number";
      ++col;
    };
    for (int i = 0; i < n; ++i) take(s.demand.pd(i));
    for (int i = 0; i < n; ++i) take(s.demand.qd(i));
    for (int i = 0; i < n; ++i) take(s.solution.voltage.vm(i));
    for (int i = 0; i < n; ++i) take(s.solution.voltage.va(i));
    for (int b : gbus) take(s.solution.gen.pg(b));
    for (int b : gbus) take(s.solution.gen.qg(b));
    take(s.solution.objective);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gridflow
