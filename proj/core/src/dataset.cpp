#include "gridflow/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gridflow/csv.hpp"
#include "gridflow/powerflow.hpp"

namespace gridflow {

using nlohmann::json;

namespace {

std::string_view mode_name(PerturbationMode mode) {
  return mode == PerturbationMode::global ? "global" : "per_bus";
}

}  // namespace

void DatasetManifest::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
  if (!(range.low <= range.high)) throw ValidationError("perturbation range must satisfy low <= high");
  if (sample_count < 0) throw ValidationError("sample_count must be non-negative");
  if (schema_version != kSchemaVersion)
    throw SchemaError("unsupported dataset schema version " + std::to_string(schema_version));
}

std::vector<DemandVector> sample_demands(const Network& network, int count, PerturbationRange range,
                                         std::uint64_t seed, PerturbationMode mode) {
  if (count < 1) throw std::invalid_argument("count must be at least 1");
  if (!(range.low > 0.0 && range.low <= range.high)) throw std::invalid_argument("range must satisfy 0 < low <= high");
  const DemandVector nominal = nominal_demand(network);
  const int n = network.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(range.low, range.high);
  auto draw = [&] { return range.low == range.high ? range.low : unif(rng); };

  std::vector<DemandVector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    DemandVector d = nominal;
    if (mode == PerturbationMode::global) {
      const double u = draw();
      d.pd *= u;
      d.qd *= u;
    } else {
      for (int i = 0; i < n; ++i) {
        const double up = draw();
        const double uq = draw();
        d.pd(i) *= up;
        d.qd(i) *= uq;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::string to_json_line(const ScenarioDiagnostic& d) {
  json j = {{"scenario", d.scenario},
            {"scenario_id", d.scenario_id},
            {"status", to_string(d.status)},
            {"outer_iterations", d.outer_iterations},
            {"inner_iterations", d.inner_iterations},
            {"final_residual", d.mean_residual},
            {"overloaded_branches", d.overloaded_branches},
            {"accepted", d.accepted}};
  return j.dump();
}

GeneratedDataset generate_dataset(const Network& network, int count, PerturbationRange range, std::uint64_t seed,
                                  const GenerationOptions& options) {
  options.solver.validate();
  const std::vector<DemandVector> demands = sample_demands(network, count, range, seed, options.mode);
  const AdmittanceMatrix ybus = build_ybus(network);

  const AcopfResult nominal = solve_acopf(network, ybus, nominal_demand(network), options.solver);
  const OpfSolution* warm = nominal.converged() ? &nominal.solution : nullptr;

  std::vector<AcopfResult> results(demands.size());
  std::atomic<int> next{0};
  std::mutex progress_mutex;
  int done = 0;
  auto worker = [&] {
    for (int k = next++; k < count; k = next++) {
      results[static_cast<std::size_t>(k)] =
          solve_acopf(network, ybus, demands[static_cast<std::size_t>(k)], options.solver, warm);
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(++done, count);
      }
    }
  };
  const int jobs = std::clamp(options.jobs, 1, count);
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  GeneratedDataset out;
  for (int k = 0; k < count; ++k) {
    const AcopfResult& r = results[static_cast<std::size_t>(k)];
    ScenarioDiagnostic d;
    d.scenario = k;
    d.status = r.diagnostics.status;
    d.outer_iterations = r.diagnostics.outer_iterations;
    d.inner_iterations = r.diagnostics.inner_iterations;
    d.mean_residual = r.diagnostics.mean_residual;
    d.overloaded_branches = r.diagnostics.overloaded_branches;
    d.accepted = r.converged() && r.solution.feasibility.mean_abs < options.solver.feas_tol &&
                 box_violation(network, r.solution) == 0.0;
    if (d.accepted) {
      d.scenario_id = static_cast<int>(out.samples.size());
      out.samples.push_back({d.scenario_id, demands[static_cast<std::size_t>(k)], r.solution});
    } else {
      ++out.rejected;
    }
    out.diagnostics.push_back(d);
  }
  const double yield = static_cast<double>(out.samples.size()) / count;
  if (yield < options.min_yield) {
    std::ostringstream msg;
    msg << "only " << out.samples.size() << " of " << count << " scenarios solved (yield " << yield
        << "); the demand range is likely outside the solver's envelope";
    throw YieldError(msg.str(), std::move(out.diagnostics));
  }
  return out;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(const std::vector<LabeledSample>& samples,
                                                                        double train_fraction, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("cannot split an empty sample list");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on std::shuffle.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(samples.size())));
  std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> out;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_train ? out.first : out.second).push_back(samples[order[k]]);
  return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j = {{"schema", "gridflow.dataset"},
            {"schema_version", m.schema_version},
            {"case_name", m.case_name},
            {"sample_count", m.sample_count},
            {"perturbation_range", {m.range.low, m.range.high}},
            {"perturbation_mode", mode_name(m.mode)},
            {"seed", m.seed},
            {"train_fraction", m.train_fraction},
            {"units", "per-unit on base_mva; angles in radians; objective in $/hr"},
            {"columns", m.columns}};
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    if (j.value("schema", std::string{}) != "gridflow.dataset") throw SchemaError("not a gridflow dataset manifest");
    m.schema_version = j.at("schema_version").get<int>();
    m.case_name = j.at("case_name").get<std::string>();
    m.sample_count = j.at("sample_count").get<int>();
    const auto& r = j.at("perturbation_range");
    m.range = {r.at(0).get<double>(), r.at(1).get<double>()};
    const std::string mode = j.value("perturbation_mode", std::string{"per_bus"});
    if (mode != "per_bus" && mode != "global") throw SchemaError("unknown perturbation_mode '" + mode + "'");
    m.mode = mode == "global" ? PerturbationMode::global : PerturbationMode::per_bus;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_fraction = j.at("train_fraction").get<double>();
    m.columns = j.at("columns").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed dataset manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void write_dataset(const std::filesystem::path& dir, const Network& network, const DatasetManifest& manifest,
                   const std::vector<LabeledSample>& samples) {
  manifest.validate();
  std::filesystem::create_directories(dir);
  DatasetManifest m = manifest;
  m.sample_count = static_cast<int>(samples.size());
  m.columns = sample_columns(network);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
    out << manifest_to_json(m);
  }
  std::ofstream out(dir / "samples.csv", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "samples.csv").string());
  write_samples_csv(out, network, samples);
  if (!out) throw Error("write failed for " + (dir / "samples.csv").string());
}

LoadedDataset read_dataset(const std::filesystem::path& path, const Network& network) {
  std::filesystem::path dir = path;
  std::filesystem::path csv_path = path / "samples.csv";
  if (!std::filesystem::is_directory(path)) {
    dir = path.parent_path();
    csv_path = path;
  }
  if (!std::filesystem::exists(csv_path)) throw Error("dataset file not found: " + csv_path.string());

  LoadedDataset out;
  const std::filesystem::path manifest_path = (dir.empty() ? std::filesystem::path(".") : dir) / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    out.manifest = manifest_from_json(buf.str());
    if (out.manifest.columns != sample_columns(network))
      throw SchemaError("dataset manifest columns do not match case " + network.name());
  } else {
    out.manifest.case_name = network.name();
    out.manifest.columns = sample_columns(network);
  }

  ImportResult imported = import_labels(csv_path.string(), network);
  if (!imported.rejected.empty()) {
    const ImportDiagnostic& d = imported.rejected.front();
    throw ValidationError(csv_path.string() + ": " + std::to_string(imported.rejected.size()) +
                          " rows failed validation (first: row " + std::to_string(d.row) + ", " + d.reason + ")");
  }
  for (LabeledSample& s : imported.samples) s.solution.source = SolutionSource::internal_solver;
  out.samples = std::move(imported.samples);
  if (std::filesystem::exists(manifest_path) && out.manifest.sample_count != static_cast<int>(out.samples.size()))
    throw SchemaError("manifest declares " + std::to_string(out.manifest.sample_count) + " samples, file has " +
                      std::to_string(out.samples.size()));
  return out;
}

}  // namespace gridflow
