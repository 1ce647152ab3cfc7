#include "gridflow/train.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "gridflow/csv.hpp"
#include "gridflow/dataset.hpp"
#include "gridflow/error.hpp"
#include "gridflow/powerflow.hpp"

namespace gridflow {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  if (lr_decay_every < 1 || !(lr_decay > 0.0)) throw std::invalid_argument("invalid learning-rate schedule");
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& part, double weight) {
  acc.v_mse += weight * part.v_mse;
  acc.phi_mse += weight * part.phi_mse;
  acc.pg_mse += weight * part.pg_mse;
  acc.qg_mse += weight * part.qg_mse;
  acc.pd_recon_mse += weight * part.pd_recon_mse;
  acc.qd_recon_mse += weight * part.qd_recon_mse;
}

}  // namespace

TrainResult train(const Model& initial, const Network& network, const AdmittanceMatrix& ybus,
                  const std::vector<LabeledSample>& train_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw std::invalid_argument("training set is empty");

  std::vector<LabeledSample> fit_set = train_set;
  std::vector<LabeledSample> val_set;
  const auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(train_set.size())));
  if (n_val > 0 && n_val < train_set.size())
    std::tie(fit_set, val_set) = split(train_set, 1.0 - static_cast<double>(n_val) / train_set.size(), config.seed);

  Model model = initial;
  model.normalizer = Normalizer::fit(Batch::from_samples(network, fit_set).inputs);
  const Batch val_batch = val_set.empty() ? Batch{} : Batch::from_samples(network, val_set);

  TrainResult result;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();

  Eigen::VectorXd theta = model.parameters();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  long step = 0;

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(fit_set.size());
  std::iota(order.begin(), order.end(), 0);
  ModelGradient grad;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate * std::pow(config.lr_decay, epoch / config.lr_decay_every);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    bool finite = true;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Batch batch = Batch::from_samples(network, fit_set, idx);
      const LossBreakdown lb = loss_and_gradient(model, ybus.y, network, batch, config.loss_mode, &grad);
      const Eigen::VectorXd g = grad.flatten();
      if (!std::isfinite(lb.total) || !g.allFinite()) {
        finite = false;
        break;
      }
      accumulate(rec.train, lb, static_cast<double>(idx.size()) / static_cast<double>(order.size()));
      ++step;
      if (config.optimizer == Optimizer::adam) {
        m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
        m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
        theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.epsilon);
      } else {
        theta -= lr * g;
      }
      model.set_parameters(theta);
    }
    rec.train.finalize();
    if (finite && !val_set.empty()) {
      rec.validation = loss_and_gradient(model, ybus.y, network, val_batch, config.loss_mode, nullptr);
      finite = std::isfinite(rec.validation.total);
    }
    if (!finite || !theta.allFinite()) {
      result.diverged = true;
      break;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = val_set.empty() ? rec.train.total : rec.validation.total;
    if (val_set.empty() || score < best) {
      best = score;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

std::vector<Prediction> predict(const Model& model, const Network& network, const AdmittanceMatrix& ybus,
                                const std::vector<LabeledSample>& samples) {
  std::vector<Prediction> out;
  out.reserve(samples.size());
  if (samples.empty()) return out;
  const int n = network.size();
  const Eigen::MatrixXd y = forward(model, Batch::from_samples(network, samples).inputs);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    VoltageProfile v{y.col(c).head(n), y.col(c).tail(n)};
    GenSetpoints gen = recover_generation(network, ybus, v, samples[k].demand);
    out.push_back({samples[k].scenario_id, make_solution(network, ybus, std::move(v), std::move(gen),
                                                         samples[k].demand, SolutionSource::nn)});
  }
  return out;
}

double clipped_cost(const Network& network, const GenSetpoints& gen) {
  GenSetpoints clipped = gen;
  for (const Generator& g : network.generators()) {
    clipped.pg(g.bus) = std::clamp(gen.pg(g.bus), g.p_min, g.p_max);
    clipped.qg(g.bus) = std::clamp(gen.qg(g.bus), g.q_min, g.q_max);
  }
  return generation_cost(network, clipped);
}

EvalMetrics compute_metrics(const Network& network, const AdmittanceMatrix& ybus,
                            const std::vector<Prediction>& predictions, const std::vector<LabeledSample>& labels) {
  std::unordered_map<int, const LabeledSample*> by_id;
  for (const LabeledSample& s : labels) by_id[s.scenario_id] = &s;
  const int n = network.size();
  const auto& gbus = network.generator_buses();
  EvalMetrics m;
  for (const Prediction& p : predictions) {
    const auto it = by_id.find(p.scenario_id);
    if (it == by_id.end()) throw SchemaError("no label for scenario " + std::to_string(p.scenario_id));
    const LabeledSample& s = *it->second;
    m.v_mse += (p.solution.voltage.vm - s.solution.voltage.vm).squaredNorm() / n;
    m.phi_mse += (p.solution.voltage.va - s.solution.voltage.va).squaredNorm() / n;
    double dpg = 0.0, dqg = 0.0;
    for (int b : gbus) {
      dpg += std::pow(p.solution.gen.pg(b) - s.solution.gen.pg(b), 2);
      dqg += std::pow(p.solution.gen.qg(b) - s.solution.gen.qg(b), 2);
    }
    m.pg_mse += dpg / static_cast<double>(gbus.size());
    m.qg_mse += dqg / static_cast<double>(gbus.size());
    m.feasibility += residual_check(network, ybus, p.solution.voltage, s.demand, p.solution.gen).mean_abs;
    m.optimality_gap += (clipped_cost(network, p.solution.gen) - s.solution.objective) / s.solution.objective;
    ++m.count;
  }
  if (m.count > 0) {
    const double c = m.count;
    m.v_mse /= c;
    m.phi_mse /= c;
    m.pg_mse /= c;
    m.qg_mse /= c;
    m.feasibility /= c;
    m.optimality_gap /= c;
  }
  return m;
}

EvalMetrics evaluate(const Model& model, const Network& network, const AdmittanceMatrix& ybus,
                     const std::vector<LabeledSample>& test_set) {
  return compute_metrics(network, ybus, predict(model, network, ybus, test_set), test_set);
}

std::vector<std::string> prediction_columns(const Network& network) {
  const int n = network.size();
  std::vector<std::string> cols{"scenario_id"};
  for (const char* prefix : {"vm_", "va_"})
    for (int i = 0; i < n; ++i) cols.push_back(prefix + std::to_string(i + 1));
  for (const char* prefix : {"pg_", "qg_"})
    for (int b : network.generator_buses()) cols.push_back(prefix + std::to_string(network.bus(b).external_id));
  return cols;
}

void write_predictions_csv(std::ostream& out, const Network& network, const std::vector<Prediction>& predictions) {
  out << csv::join(prediction_columns(network)) << '\n';
  for (const Prediction& p : predictions) {
    out << p.scenario_id;
    for (Eigen::Index i = 0; i < p.solution.voltage.vm.size(); ++i) out << ',' << csv::format(p.solution.voltage.vm(i));
    for (Eigen::Index i = 0; i < p.solution.voltage.va.size(); ++i) out << ',' << csv::format(p.solution.voltage.va(i));
    for (int b : network.generator_buses()) out << ',' << csv::format(p.solution.gen.pg(b));
    for (int b : network.generator_buses()) out << ',' << csv::format(p.solution.gen.qg(b));
    out << '\n';
  }
}

std::vector<Prediction> read_predictions_csv(std::istream& in, const Network& network, const AdmittanceMatrix& ybus,
                                             const std::vector<LabeledSample>& labels, SolutionSource source) {
  const std::vector<std::string> expected = prediction_columns(network);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("predictions file is empty");
  const auto header = csv::split(line);
  if (header.size() != expected.size() || !std::equal(header.begin(), header.end(), expected.begin()))
    throw SchemaError("predictions header does not match case " + network.name());
  std::unordered_map<int, const LabeledSample*> by_id;
  for (const LabeledSample& s : labels) by_id[s.scenario_id] = &s;

  const int n = network.size();
  std::vector<Prediction> out;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    const auto f = csv::split(line);
    if (f.size() != expected.size()) throw SchemaError("predictions row " + std::to_string(row) + " is ragged");
    Prediction p;
    VoltageProfile v = VoltageProfile::flat(n);
    GenSetpoints gen = GenSetpoints::zero(n);
    bool ok = csv::parse(f[0], p.scenario_id);
    std::size_t col = 1;
    for (int i = 0; i < n; ++i) ok = csv::parse(f[col++], v.vm(i)) && ok;
    for (int i = 0; i < n; ++i) ok = csv::parse(f[col++], v.va(i)) && ok;
    for (int b : network.generator_buses()) ok = csv::parse(f[col++], gen.pg(b)) && ok;
    for (int b : network.generator_buses()) ok = csv::parse(f[col++], gen.qg(b)) && ok;
    if (!ok) throw SchemaError("predictions row " + std::to_string(row) + " has a non-numeric field");
    const auto it = by_id.find(p.scenario_id);
    if (it == by_id.end()) throw SchemaError("predictions row " + std::to_string(row) + " has no matching label");
    p.solution = make_solution(network, ybus, std::move(v), std::move(gen), it->second->demand, source);
    out.push_back(std::move(p));
  }
  return out;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,learning_rate,train_total,train_v_mse,train_phi_mse,train_pg_mse,train_qg_mse,train_pd_recon_mse,"
         "train_qd_recon_mse,val_total\n";
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << csv::format(r.learning_rate) << ',' << csv::format(r.train.total) << ','
        << csv::format(r.train.v_mse) << ',' << csv::format(r.train.phi_mse) << ',' << csv::format(r.train.pg_mse)
        << ',' << csv::format(r.train.qg_mse) << ',' << csv::format(r.train.pd_recon_mse) << ','
        << csv::format(r.train.qd_recon_mse) << ',' << csv::format(r.validation.total) << '\n';
  }
}

}  // namespace gridflow
