#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gridflow/calibration.hpp"
#include "gridflow/dataset.hpp"
#include "gridflow/error.hpp"
#include "gridflow/grid_model.hpp"
#include "gridflow/neural.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/refsolver.hpp"
#include "gridflow/report.hpp"
#include "gridflow/train.hpp"

namespace gridflow::cli {
namespace {

namespace fs = std::filesystem;

// Errors caused by the invocation rather than by the library.
struct UsageError : Error {
  using Error::Error;
};

std::shared_ptr<spdlog::logger> make_logger() {
  auto logger = spdlog::get("gridflow");
  if (!logger) logger = spdlog::stderr_color_mt("gridflow");
  logger->set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("GRIDFLOW_LOG"); env != nullptr && *env != '\0') {
    level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") level = spdlog::level::warn;
  }
  logger->set_level(level);
  return logger;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PerturbationRange parse_range(const std::string& text) {
  const auto comma = text.find(',');
  PerturbationRange r;
  try {
    if (comma == std::string::npos) throw std::invalid_argument("");
    std::size_t used = 0;
    const std::string lo = text.substr(0, comma), hi = text.substr(comma + 1);
    r.low = std::stod(lo, &used);
    if (used != lo.size()) throw std::invalid_argument("");
    r.high = std::stod(hi, &used);
    if (used != hi.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw UsageError("--range expects LO,HI (for example 0.8,1.2), got '" + text + "'");
  }
  if (!(r.low > 0.0 && r.low <= r.high)) throw UsageError("--range must satisfy 0 < LO <= HI");
  return r;
}

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int w = std::stoi(item, &used);
      if (used != item.size() || w < 1) throw std::invalid_argument("");
      out.push_back(w);
    } catch (const std::exception&) {
      throw UsageError("--hidden expects comma-separated positive widths, got '" + text + "'");
    }
  }
  return out;
}

fs::path samples_path(const std::string& dataset) {
  const fs::path p(dataset);
  return fs::is_directory(p) ? p / "samples.csv" : p;
}

void require_dataset(const std::string& dataset) {
  if (dataset.empty()) throw UsageError("--dataset is required");
  if (!fs::exists(samples_path(dataset))) throw UsageError("dataset file not found: " + dataset);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw UsageError("file not found: " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError("cannot write " + p.string());
  return out;
}

// Case from --case, or from the dataset manifest when --case is omitted.
Network resolve_network(const std::string& case_arg, const std::string& dataset) {
  std::string spec = case_arg;
  if (spec.empty() && !dataset.empty()) {
    const fs::path manifest = samples_path(dataset).parent_path() / "manifest.json";
    if (fs::exists(manifest)) spec = manifest_from_json(read_text(manifest)).case_name;
  }
  if (spec.empty()) throw UsageError("--case is required");
  const std::string path = resolve_case_path(spec);
  if (path.empty()) throw UsageError("case file not found: " + spec);
  return load_case(path);
}

enum class Split { train, test, all };

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  if (s == "all") return Split::all;
  throw UsageError("--split must be train, test or all");
}

struct DatasetView {
  LoadedDataset data;
  std::vector<LabeledSample> selected;
};

DatasetView load_dataset(const std::string& dataset, const Network& network, Split which) {
  DatasetView v;
  v.data = read_dataset(fs::path(dataset), network);
  if (v.data.samples.empty()) throw UsageError("dataset " + dataset + " has no samples");
  if (which == Split::all || v.data.samples.size() < 2) {
    v.selected = v.data.samples;
    return v;
  }
  auto [train, test] = split(v.data.samples, v.data.manifest.train_fraction, v.data.manifest.seed);
  v.selected = which == Split::train ? std::move(train) : std::move(test);
  return v;
}

void print_metrics(std::ostream& out, const EvalMetrics& m) {
  out << std::setprecision(4) << "scenarios " << m.count << "\n"
      << "v_mse " << m.v_mse << "\nphi_mse " << m.phi_mse << "\npg_mse " << m.pg_mse << "\nqg_mse " << m.qg_mse
      << "\nfeasibility " << m.feasibility << "\noptimality_gap " << 100.0 * m.optimality_gap << "%\n";
}

struct Options {
  std::string case_arg;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int count = 1000;
  std::string range = "0.8,1.2";
  double rho = 1e-6;
  int max_epochs = 100;
  std::string loss_mode = "physics";
  std::string model;
  std::string dataset;
  int jobs = 1;
  // subcommand specifics
  std::string positional_case;
  std::string demand = "nominal";
  std::string method = "nr";
  std::string mode = "per_bus";
  double train_fraction = 0.8;
  int epochs = 300;
  int batch_size = 512;
  double learning_rate = 1e-3;
  std::string hidden = "512,256,128,64";
  std::string activation = "leaky_relu";
  double validation_fraction = 0.1;
  std::string split = "test";
  std::string predictions;
  std::string input_dir;
  std::string report_method = "proposed";
  bool release_clipped = false;
  bool pin_reference = false;
  std::string stop_metric = "mean";
};

int cmd_case_validate(const Options& o, std::ostream& out) {
  const std::string spec = o.positional_case.empty() ? o.case_arg : o.positional_case;
  if (spec.empty()) throw UsageError("case validate needs a case file");
  const std::string path = resolve_case_path(spec);
  if (path.empty()) throw UsageError("case file not found: " + spec);
  const Network net = load_case(path);
  out << net.size() << " buses, " << net.generators().size() << " generators, " << net.branches().size()
      << " branches\n";
  return 0;
}

int cmd_case_show(const Options& o, std::ostream& out) {
  const std::string spec = o.positional_case.empty() ? o.case_arg : o.positional_case;
  if (spec.empty()) throw UsageError("case show needs a case file");
  const std::string path = resolve_case_path(spec);
  if (path.empty()) throw UsageError("case file not found: " + spec);
  const Network net = load_case(path);
  out << net.name() << ": " << net.size() << " buses, " << net.generators().size() << " generators, "
      << net.branches().size() << " branches, base " << net.base_mva() << " MVA\n";
  out << "bus  kind       pd(pu)    qd(pu)   vmin  vmax\n";
  for (const Bus& b : net.buses()) {
    out << std::setw(4) << b.external_id << "  " << std::setw(9) << std::left << to_string(b.kind) << std::right
        << std::fixed << std::setprecision(4) << std::setw(9) << b.p_demand_nominal << std::setw(10)
        << b.q_demand_nominal << std::setw(7) << std::setprecision(2) << b.v_min << std::setw(6) << b.v_max << '\n';
    out.unsetf(std::ios::fixed);
  }
  if (!o.out_dir.empty() && o.out_dir != ".") {
    auto f = open_out(fs::path(o.out_dir) / (net.name() + ".json"));
    f << serialize_case(net);
  }
  return 0;
}

int cmd_ybus(const Options& o, std::ostream& out) {
  const Network net = resolve_network(o.case_arg, {});
  const AdmittanceMatrix y = build_ybus(net);
  int nnz = 0;
  for (int i = 0; i < y.size(); ++i)
    for (int j = 0; j < y.size(); ++j) nnz += std::abs(y(i, j)) != 0.0 ? 1 : 0;
  const double asym = (y.y - y.y.transpose()).cwiseAbs().maxCoeff();
  out << net.name() << ": " << y.size() << "x" << y.size() << " admittance matrix, " << nnz
      << " nonzeros, max |Y - Y^T| = " << asym << "\n";
  if (o.out_dir != ".") {
    auto f = open_out(fs::path(o.out_dir) / "ybus.csv");
    f << "row,col,g,b\n" << std::setprecision(17);
    for (int i = 0; i < y.size(); ++i)
      for (int j = 0; j < y.size(); ++j)
        if (std::abs(y(i, j)) != 0.0) f << i + 1 << ',' << j + 1 << ',' << y(i, j).real() << ',' << y(i, j).imag() << '\n';
  }
  return 0;
}

int cmd_pf(const Options& o, std::ostream& out) {
  const Network net = resolve_network(o.case_arg, {});
  const AdmittanceMatrix y = build_ybus(net);
  DemandVector d = nominal_demand(net);
  if (o.demand != "nominal") {
    try {
      std::size_t used = 0;
      const double scale = std::stod(o.demand, &used);
      if (used != o.demand.size() || !(scale > 0.0)) throw std::invalid_argument("");
      d.pd *= scale;
      d.qd *= scale;
    } catch (const std::exception&) {
      throw UsageError("--demand must be 'nominal' or a positive scale factor");
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  PFResult r;
  if (o.method == "nr")
    r = solve_newton_raphson(net, y, d, case_start(net), case_dispatch(net));
  else if (o.method == "gs")
    r = solve_gauss_seidel(net, y, d, case_start(net), case_dispatch(net));
  else
    throw UsageError("--method must be nr or gs");
  const ResidualReport res = residual_check(net, y, r.voltage, d, r.gen);
  out << (r.converged ? "converged" : "did not converge") << " in " << r.iterations << " iterations ("
      << seconds_since(t0) << " s)\n"
      << "mean residual " << res.mean_abs << ", max residual " << res.max_abs << "\n";
  if (o.out_dir != ".") {
    auto f = open_out(fs::path(o.out_dir) / "pf.csv");
    f << "bus,vm,va,pg,qg\n" << std::setprecision(17);
    for (const Bus& b : net.buses())
      f << b.external_id << ',' << r.voltage.vm(b.id) << ',' << r.voltage.va(b.id) << ',' << r.gen.pg(b.id) << ','
        << r.gen.qg(b.id) << '\n';
  }
  return r.converged ? 0 : 2;
}

int cmd_gen_data(const Options& o, std::ostream& out, spdlog::logger& log) {
  const Network net = resolve_network(o.case_arg, {});
  if (o.count < 1) throw UsageError("--count must be at least 1");
  if (!(o.train_fraction > 0.0 && o.train_fraction < 1.0)) throw UsageError("--train-fraction must lie in (0, 1)");
  if (o.mode != "per_bus" && o.mode != "global") throw UsageError("--mode must be per_bus or global");
  const PerturbationRange range = parse_range(o.range);
  GenerationOptions opts;
  opts.jobs = o.jobs;
  opts.mode = o.mode == "global" ? PerturbationMode::global : PerturbationMode::per_bus;
  opts.progress = [&log](int done, int total) {
    if (done % 500 == 0 || done == total) log.info("labelled {}/{} scenarios", done, total);
  };
  const fs::path dir(o.out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  auto write_diag = [&](const std::vector<ScenarioDiagnostic>& diags) {
    auto f = open_out(dir / "diagnostics.jsonl");
    for (const ScenarioDiagnostic& d : diags) f << to_json_line(d) << '\n';
  };
  GeneratedDataset data;
  try {
    data = generate_dataset(net, o.count, range, o.seed, opts);
  } catch (const YieldError& e) {
    write_diag(e.diagnostics());
    throw UsageError(std::string(e.what()) + "; see " + (dir / "diagnostics.jsonl").string());
  }
  write_diag(data.diagnostics);
  DatasetManifest m;
  m.case_name = net.name();
  m.range = range;
  m.mode = opts.mode;
  m.seed = o.seed;
  m.train_fraction = o.train_fraction;
  write_dataset(dir, net, m, data.samples);
  int overloaded = 0;
  for (const ScenarioDiagnostic& d : data.diagnostics) overloaded += d.accepted && d.overloaded_branches > 0;
  out << "labelled " << data.samples.size() << " of " << o.count << " scenarios (" << data.rejected
      << " rejected) in " << seconds_since(t0) << " s\n";
  if (overloaded > 0) log.warn("{} accepted scenarios exceed a branch rating", overloaded);
  out << "wrote " << (dir / "samples.csv").string() << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, spdlog::logger& log) {
  require_dataset(o.dataset);
  const Network net = resolve_network(o.case_arg, o.dataset);
  const AdmittanceMatrix y = build_ybus(net);
  const DatasetView view = load_dataset(o.dataset, net, Split::train);
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.loss_mode = loss_mode_from_string(o.loss_mode);
  cfg.seed = o.seed;
  cfg.validation_fraction = o.validation_fraction;
  cfg.validate();
  const ModelSpec spec = ModelSpec::for_network(net, parse_widths(o.hidden), activation_from_string(o.activation));
  const Model init = init_model(spec, o.seed);
  log.info("training {} parameters on {} samples", init.parameter_count(), view.selected.size());
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(init, net, y, view.selected, cfg, [&log](const EpochRecord& r) {
    log.info("epoch {} train {:.4e} val {:.4e}", r.epoch, r.train.total, r.validation.total);
  });
  const fs::path dir(o.out_dir);
  save_model((dir / "model.json").string(), result.model, net.name());
  {
    auto f = open_out(dir / "history.csv");
    write_history_csv(f, result.history);
  }
  out << "trained " << result.history.size() << " epochs in " << seconds_since(t0) << " s, best epoch "
      << result.best_epoch << (result.diverged ? " (stopped: loss became non-finite)" : "") << "\n";
  out << "wrote " << (dir / "model.json").string() << "\n";
  return result.diverged ? 2 : 0;
}

Model load_model_arg(const std::string& path) {
  if (path.empty()) throw UsageError("--model is required");
  if (!fs::exists(path)) throw UsageError("model file not found: " + path);
  return load_model(path);
}

int cmd_predict(const Options& o, std::ostream& out) {
  require_dataset(o.dataset);
  const Model model = load_model_arg(o.model);
  const Network net = resolve_network(o.case_arg, o.dataset);
  if (model.spec.output_dim != 2 * net.size()) throw UsageError("model does not match case " + net.name());
  const AdmittanceMatrix y = build_ybus(net);
  const DatasetView view = load_dataset(o.dataset, net, parse_split(o.split));
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Prediction> preds = predict(model, net, y, view.selected);
  const double dt = seconds_since(t0);
  const fs::path path = fs::path(o.out_dir) / "predictions.csv";
  auto f = open_out(path);
  write_predictions_csv(f, net, preds);
  out << "predicted " << preds.size() << " scenarios in " << dt << " s\nwrote " << path.string() << "\n";
  return 0;
}

int cmd_calibrate(const Options& o, std::ostream& out) {
  require_dataset(o.dataset);
  const Network net = resolve_network(o.case_arg, o.dataset);
  const AdmittanceMatrix y = build_ybus(net);
  const DatasetView view = load_dataset(o.dataset, net, Split::all);
  const fs::path dir(o.out_dir);
  const fs::path pred_path = o.predictions.empty() ? dir / "predictions.csv" : fs::path(o.predictions);
  if (!fs::exists(pred_path)) throw UsageError("predictions file not found: " + pred_path.string());
  std::ifstream pin(pred_path, std::ios::binary);
  const std::vector<Prediction> preds = read_predictions_csv(pin, net, y, view.selected, SolutionSource::nn);

  CalibrationConfig cfg;
  cfg.rho = o.rho;
  cfg.max_epochs = o.max_epochs;
  cfg.release_clipped_generators = o.release_clipped;
  cfg.pin_reference_angle = o.pin_reference;
  if (o.stop_metric != "mean" && o.stop_metric != "max") throw UsageError("--stop-metric must be mean or max");
  cfg.stop_metric = o.stop_metric == "max" ? StopMetric::max : StopMetric::mean;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<CalibrationRecord> records = calibrate_all(net, y, preds, view.selected, cfg, o.jobs);
  const double dt = seconds_since(t0);
  {
    auto f = open_out(dir / "calibrated.csv");
    write_predictions_csv(f, net, calibrated_predictions(records));
  }
  {
    auto f = open_out(dir / "calibration.csv");
    write_calibration_summary_csv(f, records);
  }
  {
    auto f = open_out(dir / "traces.csv");
    write_traces_csv(f, records);
  }
  int converged = 0;
  for (const CalibrationRecord& r : records) converged += r.outcome.converged;
  out << "calibrated " << records.size() << " scenarios in " << dt << " s: " << converged << " converged ("
      << std::setprecision(4) << 100.0 * converged / std::max<std::size_t>(1, records.size()) << "%)\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  require_dataset(o.dataset);
  const Model model = load_model_arg(o.model);
  const Network net = resolve_network(o.case_arg, o.dataset);
  if (model.spec.output_dim != 2 * net.size()) throw UsageError("model does not match case " + net.name());
  const AdmittanceMatrix y = build_ybus(net);
  const DatasetView view = load_dataset(o.dataset, net, parse_split(o.split));
  const EvalMetrics m = evaluate(model, net, y, view.selected);
  print_metrics(out, m);
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  require_dataset(o.dataset);
  const Network net = resolve_network(o.case_arg, o.dataset);
  const AdmittanceMatrix y = build_ybus(net);
  const DatasetView view = load_dataset(o.dataset, net, Split::all);
  const fs::path in = o.input_dir.empty() ? fs::path(o.out_dir) : fs::path(o.input_dir);
  for (const char* name : {"predictions.csv", "calibrated.csv", "calibration.csv", "traces.csv"})
    if (!fs::exists(in / name)) throw UsageError("missing " + (in / name).string() + " (run predict and calibrate first)");
  std::ifstream pf(in / "predictions.csv", std::ios::binary), cf(in / "calibrated.csv", std::ios::binary);
  const std::vector<Prediction> preds = read_predictions_csv(pf, net, y, view.selected, SolutionSource::nn);
  const std::vector<Prediction> calibrated =
      read_predictions_csv(cf, net, y, view.selected, SolutionSource::calibrated);
  std::ifstream sf(in / "calibration.csv", std::ios::binary), tf(in / "traces.csv", std::ios::binary);
  const std::vector<CalibrationRecord> records = read_calibration_csv(sf, tf, calibrated);
  long params = 0;
  if (!o.model.empty()) params = static_cast<long>(load_model_arg(o.model).parameter_count());
  RunReport report = build_report(net, y, view.selected, preds, records, o.report_method, params, o.rho);
  emit_report(o.out_dir, report, records);
  out << std::setprecision(4) << net.name() << " " << o.report_method << ": convergence rate "
      << 100.0 * report.convergence_rate << "%, feasibility " << report.predicted.feasibility << " -> "
      << report.feasibility_post_converged << ", optimality gap " << 100.0 * report.gap_pre_converged << "% -> "
      << 100.0 * report.gap_post_converged << "%\n";
  out << "wrote " << (fs::path(o.out_dir) / "report.json").string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const auto log = make_logger();
  Options o;
  CLI::App app{"gridflow: ACOPF prediction and feasibility calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gridflow 0.1.0");

  auto add_case = [&](CLI::App* c) { c->add_option("--case", o.case_arg, "Case file or bundled case name"); };
  auto add_out = [&](CLI::App* c) { c->add_option("--out", o.out_dir, "Output directory"); };
  auto add_dataset = [&](CLI::App* c) { c->add_option("--dataset", o.dataset, "Dataset directory or samples.csv"); };
  auto add_jobs = [&](CLI::App* c) { c->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber); };
  auto add_split = [&](CLI::App* c) {
    c->add_option("--split", o.split, "Dataset part: train, test or all")->capture_default_str();
  };
  auto add_calibration = [&](CLI::App* c) {
    c->add_option("--rho", o.rho, "Residual stop threshold (per-unit)")->capture_default_str();
    c->add_option("--max-epochs", o.max_epochs, "Calibration epoch budget")->capture_default_str();
  };

  CLI::App* case_cmd = app.add_subcommand("case", "Inspect a case file");
  case_cmd->require_subcommand(1);
  CLI::App* validate = case_cmd->add_subcommand("validate", "Parse and validate a case");
  validate->add_option("path", o.positional_case, "Case file or bundled case name");
  add_case(validate);
  CLI::App* show = case_cmd->add_subcommand("show", "Print bus data");
  show->add_option("path", o.positional_case, "Case file or bundled case name");
  add_case(show);
  add_out(show);

  CLI::App* ybus = app.add_subcommand("ybus", "Build the admittance matrix");
  add_case(ybus);
  add_out(ybus);

  CLI::App* pf = app.add_subcommand("pf", "Solve the power flow");
  add_case(pf);
  add_out(pf);
  pf->add_option("--demand", o.demand, "'nominal' or a uniform scale factor")->capture_default_str();
  pf->add_option("--method", o.method, "nr or gs")->capture_default_str();

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a labelled dataset");
  add_case(gen);
  add_out(gen);
  add_jobs(gen);
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--count", o.count, "Number of scenarios")->capture_default_str();
  gen->add_option("--range", o.range, "Demand scaling range LO,HI")->capture_default_str();
  gen->add_option("--mode", o.mode, "per_bus or global scaling")->capture_default_str();
  gen->add_option("--train-fraction", o.train_fraction, "Train share recorded in the manifest")->capture_default_str();

  CLI::App* tr = app.add_subcommand("train", "Train a model");
  add_case(tr);
  add_out(tr);
  add_dataset(tr);
  tr->add_option("--seed", o.seed, "Random seed");
  tr->add_option("--loss-mode", o.loss_mode, "physics or supervised")->capture_default_str();
  tr->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  tr->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str();
  tr->add_option("--lr", o.learning_rate, "Learning rate")->capture_default_str();
  tr->add_option("--hidden", o.hidden, "Hidden widths, comma separated")->capture_default_str();
  tr->add_option("--activation", o.activation, "relu or leaky_relu")->capture_default_str();
  tr->add_option("--validation-fraction", o.validation_fraction, "Share held out for model selection")
      ->capture_default_str();

  CLI::App* pr = app.add_subcommand("predict", "Predict solutions for a dataset");
  add_case(pr);
  add_out(pr);
  add_dataset(pr);
  add_split(pr);
  pr->add_option("--model", o.model, "Model checkpoint");

  CLI::App* cal = app.add_subcommand("calibrate", "Calibrate predictions for feasibility");
  add_case(cal);
  add_out(cal);
  add_dataset(cal);
  add_jobs(cal);
  add_calibration(cal);
  cal->add_option("--predictions", o.predictions, "Predictions CSV (default <out>/predictions.csv)");
  cal->add_option("--stop-metric", o.stop_metric, "mean or max residual")->capture_default_str();
  cal->add_flag("--release-clipped", o.release_clipped, "Let clipped generator buses join the voltage sweep");
  cal->add_flag("--pin-reference", o.pin_reference, "Hold the reference angle fixed");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate a model against labels");
  add_case(ev);
  add_dataset(ev);
  add_split(ev);
  ev->add_option("--model", o.model, "Model checkpoint");

  CLI::App* rep = app.add_subcommand("report", "Summarise predictions and calibration");
  add_case(rep);
  add_out(rep);
  add_dataset(rep);
  rep->add_option("--rho", o.rho, "Residual threshold used for calibration")->capture_default_str();
  rep->add_option("--in", o.input_dir, "Directory holding predict/calibrate outputs (default --out)");
  rep->add_option("--model", o.model, "Model checkpoint (for the parameter count)");
  rep->add_option("--method", o.report_method, "Method label for table2.csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) return cmd_case_validate(o, out);
    if (show->parsed()) return cmd_case_show(o, out);
    if (ybus->parsed()) return cmd_ybus(o, out);
    if (pf->parsed()) return cmd_pf(o, out);
    if (gen->parsed()) return cmd_gen_data(o, out, *log);
    if (tr->parsed()) return cmd_train(o, out, *log);
    if (pr->parsed()) return cmd_predict(o, out);
    if (cal->parsed()) return cmd_calibrate(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (rep->parsed()) return cmd_report(o, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace gridflow::cli
