#include "gridflow/report.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "gridflow/csv.hpp"
#include "gridflow/error.hpp"

namespace gridflow {

using nlohmann::json;

std::vector<CalibrationRecord> calibrate_all(const Network& network, const AdmittanceMatrix& ybus,
                                             const std::vector<Prediction>& candidates,
                                             const std::vector<LabeledSample>& labels,
                                             const CalibrationConfig& config, int jobs) {
  config.validate();
  std::unordered_map<int, const LabeledSample*> by_id;
  for (const LabeledSample& s : labels) by_id[s.scenario_id] = &s;
  std::vector<const DemandVector*> demands;
  for (const Prediction& p : candidates) {
    const auto it = by_id.find(p.scenario_id);
    if (it == by_id.end()) throw SchemaError("no demand for scenario " + std::to_string(p.scenario_id));
    demands.push_back(&it->second->demand);
  }
  std::vector<CalibrationRecord> out(candidates.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < candidates.size(); k = next++)
      out[k] = {candidates[k].scenario_id, calibrate(network, ybus, *demands[k], candidates[k].solution, config)};
  };
  const int threads = std::clamp(jobs, 1, std::max(1, static_cast<int>(candidates.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return out;
}

std::vector<Prediction> calibrated_predictions(const std::vector<CalibrationRecord>& records) {
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const CalibrationRecord& r : records) out.push_back({r.scenario_id, r.outcome.solution});
  return out;
}

void write_calibration_summary_csv(std::ostream& out, const std::vector<CalibrationRecord>& records) {
  out << "scenario_id,converged,epochs_used,final_mean_abs,final_max_abs,clip_vm,clip_va,clip_pg,clip_qg\n";
  for (const CalibrationRecord& r : records) {
    const CalibrationOutcome& o = r.outcome;
    out << r.scenario_id << ',' << (o.converged ? 1 : 0) << ',' << o.epochs_used << ','
        << csv::format(o.solution.feasibility.mean_abs) << ',' << csv::format(o.solution.feasibility.max_abs) << ','
        << o.clip_events.vm << ',' << o.clip_events.va << ',' << o.clip_events.pg << ',' << o.clip_events.qg << '\n';
  }
}

void write_traces_csv(std::ostream& out, const std::vector<CalibrationRecord>& records) {
  out << "scenario_id,epoch,mean_abs,max_abs,clip_events\n";
  for (const CalibrationRecord& r : records)
    for (const TraceEntry& t : r.outcome.trace)
      out << r.scenario_id << ',' << t.epoch << ',' << csv::format(t.mean_abs) << ',' << csv::format(t.max_abs) << ','
          << t.clips.total() << '\n';
}

std::vector<CalibrationRecord> read_calibration_csv(std::istream& summary, std::istream& traces,
                                                    const std::vector<Prediction>& calibrated) {
  std::unordered_map<int, const Prediction*> by_id;
  for (const Prediction& p : calibrated) by_id[p.scenario_id] = &p;
  std::string line;
  if (!std::getline(summary, line) || csv::split(line).size() != 9) throw SchemaError("malformed calibration summary");
  std::vector<CalibrationRecord> out;
  std::unordered_map<int, std::size_t> slot;
  int row = 0;
  while (std::getline(summary, line)) {
    if (line.empty()) continue;
    ++row;
    const auto f = csv::split(line);
    CalibrationRecord r;
    int conv = 0;
    double mean_abs = 0.0, max_abs = 0.0;
    ClipEvents& c = r.outcome.clip_events;
    if (f.size() != 9 || !csv::parse(f[0], r.scenario_id) || !csv::parse(f[1], conv) ||
        !csv::parse(f[2], r.outcome.epochs_used) || !csv::parse(f[3], mean_abs) || !csv::parse(f[4], max_abs) ||
        !csv::parse(f[5], c.vm) || !csv::parse(f[6], c.va) || !csv::parse(f[7], c.pg) || !csv::parse(f[8], c.qg))
      throw SchemaError("calibration summary row " + std::to_string(row) + " is malformed");
    r.outcome.converged = conv != 0;
    const auto it = by_id.find(r.scenario_id);
    if (it == by_id.end()) throw SchemaError("no calibrated solution for scenario " + std::to_string(r.scenario_id));
    r.outcome.solution = it->second->solution;
    slot[r.scenario_id] = out.size();
    out.push_back(std::move(r));
  }
  if (!std::getline(traces, line) || csv::split(line).size() != 5) throw SchemaError("malformed traces file");
  row = 0;
  while (std::getline(traces, line)) {
    if (line.empty()) continue;
    ++row;
    const auto f = csv::split(line);
    int id = 0, clips = 0;
    TraceEntry t;
    if (f.size() != 5 || !csv::parse(f[0], id) || !csv::parse(f[1], t.epoch) || !csv::parse(f[2], t.mean_abs) ||
        !csv::parse(f[3], t.max_abs) || !csv::parse(f[4], clips))
      throw SchemaError("traces row " + std::to_string(row) + " is malformed");
    t.clips.vm = clips;  // only the total survives the export
    const auto it = slot.find(id);
    if (it == slot.end()) throw SchemaError("trace for unknown scenario " + std::to_string(id));
    out[it->second].outcome.trace.push_back(t);
  }
  return out;
}

namespace {

json metrics_json(const EvalMetrics& m) {
  return {{"count", m.count},         {"v_mse", m.v_mse},
          {"phi_mse", m.phi_mse},     {"pg_mse", m.pg_mse},
          {"qg_mse", m.qg_mse},       {"feasibility", m.feasibility},
          {"optimality_gap", m.optimality_gap}};
}

EvalMetrics metrics_from(const json& j) {
  EvalMetrics m;
  m.count = j.at("count").get<int>();
  m.v_mse = j.at("v_mse").get<double>();
  m.phi_mse = j.at("phi_mse").get<double>();
  m.pg_mse = j.at("pg_mse").get<double>();
  m.qg_mse = j.at("qg_mse").get<double>();
  m.feasibility = j.at("feasibility").get<double>();
  m.optimality_gap = j.at("optimality_gap").get<double>();
  return m;
}

}  // namespace

std::string report_to_json(const RunReport& r) {
  json j = {{"format", "gridflow.report"},
            {"version", 1},
            {"case", r.case_name},
            {"method", r.method},
            {"parameters", r.parameter_count},
            {"rho", r.rho},
            {"scenarios", r.scenarios},
            {"predicted", metrics_json(r.predicted)},
            {"calibrated", metrics_json(r.calibrated)},
            {"convergence_rate", r.convergence_rate},
            {"converged", r.converged},
            {"feasibility_post_converged", r.feasibility_post_converged},
            {"gap_pre_converged", r.gap_pre_converged},
            {"gap_post_converged", r.gap_post_converged},
            {"epochs", {{"mean", r.epochs.mean}, {"min", r.epochs.min}, {"max", r.epochs.max}}},
            {"timings_s", r.timings_s}};
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  RunReport r;
  try {
    const json j = json::parse(text);
    if (j.value("format", std::string{}) != "gridflow.report") throw SchemaError("not a gridflow report");
    r.case_name = j.at("case").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.parameter_count = j.at("parameters").get<long>();
    r.rho = j.at("rho").get<double>();
    r.scenarios = j.at("scenarios").get<int>();
    r.predicted = metrics_from(j.at("predicted"));
    r.calibrated = metrics_from(j.at("calibrated"));
    r.convergence_rate = j.at("convergence_rate").get<double>();
    r.converged = j.at("converged").get<int>();
    r.feasibility_post_converged = j.at("feasibility_post_converged").get<double>();
    r.gap_pre_converged = j.at("gap_pre_converged").get<double>();
    r.gap_post_converged = j.at("gap_post_converged").get<double>();
    r.epochs = {j.at("epochs").at("mean").get<double>(), j.at("epochs").at("min").get<int>(),
                j.at("epochs").at("max").get<int>()};
    r.timings_s = j.at("timings_s").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::vector<CurvePoint> convergence_curve(const std::vector<CalibrationRecord>& records) {
  int last = -1;
  for (const CalibrationRecord& r : records)
    if (r.outcome.converged && !r.outcome.trace.empty())
      last = std::max(last, static_cast<int>(r.outcome.trace.size()) - 1);
  std::vector<CurvePoint> curve;
  for (int e = 0; e <= last; ++e) {
    CurvePoint p{e, 0.0, std::numeric_limits<double>::infinity(), 0.0};
    int count = 0;
    for (const CalibrationRecord& r : records) {
      if (!r.outcome.converged || r.outcome.trace.empty()) continue;
      const auto& t = r.outcome.trace;
      const double v = t[std::min<std::size_t>(static_cast<std::size_t>(e), t.size() - 1)].mean_abs;
      p.mean += v;
      p.min = std::min(p.min, v);
      p.max = std::max(p.max, v);
      ++count;
    }
    p.mean /= count;
    curve.push_back(p);
  }
  return curve;
}

RunReport build_report(const Network& network, const AdmittanceMatrix& ybus, const std::vector<LabeledSample>& labels,
                       const std::vector<Prediction>& predictions, const std::vector<CalibrationRecord>& records,
                       const std::string& method, long parameter_count, double rho) {
  RunReport r;
  r.case_name = network.name();
  r.method = method;
  r.parameter_count = parameter_count;
  r.rho = rho;
  r.scenarios = static_cast<int>(predictions.size());
  r.predicted = compute_metrics(network, ybus, predictions, labels);
  const std::vector<Prediction> calibrated = calibrated_predictions(records);
  r.calibrated = compute_metrics(network, ybus, calibrated, labels);

  std::unordered_map<int, const Prediction*> pre;
  for (const Prediction& p : predictions) pre[p.scenario_id] = &p;
  std::vector<Prediction> pre_conv, post_conv;
  double epoch_sum = 0.0;
  r.epochs.min = std::numeric_limits<int>::max();
  for (const CalibrationRecord& rec : records) {
    if (!rec.outcome.converged) continue;
    ++r.converged;
    epoch_sum += rec.outcome.epochs_used;
    r.epochs.min = std::min(r.epochs.min, rec.outcome.epochs_used);
    r.epochs.max = std::max(r.epochs.max, rec.outcome.epochs_used);
    post_conv.push_back({rec.scenario_id, rec.outcome.solution});
    const auto it = pre.find(rec.scenario_id);
    if (it != pre.end()) pre_conv.push_back(*it->second);
  }
  if (r.converged == 0) r.epochs.min = 0;
  r.convergence_rate = records.empty() ? 0.0 : static_cast<double>(r.converged) / records.size();
  if (r.converged > 0) {
    r.epochs.mean = epoch_sum / r.converged;
    const EvalMetrics post = compute_metrics(network, ybus, post_conv, labels);
    r.feasibility_post_converged = post.feasibility;
    r.gap_post_converged = post.optimality_gap;
    r.gap_pre_converged = compute_metrics(network, ybus, pre_conv, labels).optimality_gap;
  }
  return r;
}

void emit_report(const std::filesystem::path& dir, const RunReport& report,
                 const std::vector<CalibrationRecord>& records) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  {
    std::ofstream out = open("report.json");
    out << report_to_json(report);
  }
  {
    std::ofstream out = open("table2.csv");
    out << "grid,method,stage,parameters,v_mse,phi_mse,pg_mse,qg_mse,feasibility,optimality_gap\n";
    auto row = [&](const char* stage, const EvalMetrics& m) {
      out << report.case_name << ',' << report.method << ',' << stage << ',' << report.parameter_count << ','
          << csv::format(m.v_mse) << ',' << csv::format(m.phi_mse) << ',' << csv::format(m.pg_mse) << ','
          << csv::format(m.qg_mse) << ',' << csv::format(m.feasibility) << ',' << csv::format(m.optimality_gap)
          << '\n';
    };
    row("predicted", report.predicted);
    row("calibrated", report.calibrated);
  }
  {
    std::ofstream out = open("curves.csv");
    out << "epoch,mean_residual,min_residual,max_residual\n";
    for (const CurvePoint& p : convergence_curve(records))
      out << p.epoch << ',' << csv::format(p.mean) << ',' << csv::format(p.min) << ',' << csv::format(p.max) << '\n';
  }
}

}  // namespace gridflow
