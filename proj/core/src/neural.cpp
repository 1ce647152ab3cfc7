#include "gridflow/neural.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gridflow/derivatives.hpp"
#include "gridflow/error.hpp"
#include "gridflow/powerflow.hpp"

namespace gridflow {

using nlohmann::json;

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "leaky_relu"; }

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu" || s == "leakyrelu") return Activation::leaky_relu;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(LossMode m) {
  return m == LossMode::physics_informed ? "physics_informed" : "supervised_only";
}

LossMode loss_mode_from_string(std::string_view s) {
  if (s == "physics" || s == "physics_informed") return LossMode::physics_informed;
  if (s == "supervised" || s == "supervised_only") return LossMode::supervised_only;
  throw std::invalid_argument("unknown loss mode '" + std::string(s) + "' (expected physics or supervised)");
}

void ModelSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("model dimensions must be positive");
  for (int w : hidden)
    if (w < 1) throw std::invalid_argument("hidden layer widths must be at least 1");
  if (out_min.size() != output_dim || out_max.size() != output_dim)
    throw std::invalid_argument("output bounds must have one entry per output");
  for (int k = 0; k < output_dim; ++k)
    if (!std::isfinite(out_min(k)) || !std::isfinite(out_max(k)) || !(out_min(k) < out_max(k)))
      throw std::invalid_argument("output bound " + std::to_string(k) + " must be finite with min < max");
}

ModelSpec ModelSpec::for_network(const Network& network, std::vector<int> hidden, Activation activation) {
  const int n = network.size();
  ModelSpec spec;
  spec.input_dim = 2 * n;
  spec.output_dim = 2 * n;
  spec.hidden = std::move(hidden);
  spec.activation = activation;
  spec.out_min.resize(2 * n);
  spec.out_max.resize(2 * n);
  for (const Bus& b : network.buses()) {
    spec.out_min(b.id) = b.v_min;
    spec.out_max(b.id) = b.v_max;
    spec.out_min(n + b.id) = b.ang_min;
    spec.out_max(n + b.id) = b.ang_max;
  }
  spec.validate();
  return spec;
}

Normalizer Normalizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& inputs) {
  if (inputs.cols() == 0) throw std::invalid_argument("cannot fit a normaliser on zero samples");
  Normalizer out;
  out.mean = inputs.rowwise().mean();
  const Eigen::MatrixXd centered = inputs.colwise() - out.mean;
  out.stddev = (centered.array().square().rowwise().sum() / static_cast<double>(inputs.cols())).sqrt().matrix();
  for (Eigen::Index k = 0; k < out.stddev.size(); ++k)
    if (!(out.stddev(k) > 1e-12)) out.stddev(k) = 1.0;
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t count = 0;
  for (const DenseLayer& l : layers) count += static_cast<std::size_t>(l.w.size() + l.b.size());
  return count;
}

Eigen::VectorXd Model::parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const DenseLayer& l : layers) {
    flat.segment(at, l.w.size()) = l.w.reshaped();
    at += l.w.size();
    flat.segment(at, l.b.size()) = l.b;
    at += l.b.size();
  }
  return flat;
}

void Model::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
    throw std::invalid_argument("parameter vector has the wrong length");
  Eigen::Index at = 0;
  for (DenseLayer& l : layers) {
    l.w.reshaped() = flat.segment(at, l.w.size());
    at += l.w.size();
    l.b = flat.segment(at, l.b.size());
    at += l.b.size();
  }
}

bool Model::operator==(const Model& o) const {
  if (seed != o.seed || spec.input_dim != o.spec.input_dim || spec.output_dim != o.spec.output_dim ||
      spec.hidden != o.spec.hidden || spec.activation != o.spec.activation || spec.out_min != o.spec.out_min ||
      spec.out_max != o.spec.out_max || normalizer.mean != o.normalizer.mean ||
      normalizer.stddev != o.normalizer.stddev || layers.size() != o.layers.size())
    return false;
  for (std::size_t k = 0; k < layers.size(); ++k)
    if (layers[k].w != o.layers[k].w || layers[k].b != o.layers[k].b) return false;
  return true;
}

Model init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  m.seed = seed;
  m.normalizer = Normalizer::identity(spec.input_dim);
  std::mt19937_64 rng(seed);
  int fan_in = spec.input_dim;
  std::vector<int> widths = spec.hidden;
  widths.push_back(spec.output_dim);
  for (int width : widths) {
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> unif(-limit, limit);
    DenseLayer l{Eigen::MatrixXd(width, fan_in), Eigen::VectorXd::Zero(width)};
    for (Eigen::Index k = 0; k < l.w.size(); ++k) l.w.data()[k] = unif(rng);
    m.layers.push_back(std::move(l));
    fan_in = width;
  }
  return m;
}

Eigen::MatrixXd stack_inputs(const std::vector<DemandVector>& demands) {
  if (demands.empty()) return {};
  const int n = demands.front().size();
  Eigen::MatrixXd x(2 * n, static_cast<Eigen::Index>(demands.size()));
  for (std::size_t b = 0; b < demands.size(); ++b) {
    x.col(static_cast<Eigen::Index>(b)).head(n) = demands[b].pd;
    x.col(static_cast<Eigen::Index>(b)).tail(n) = demands[b].qd;
  }
  return x;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double activation_slope(Activation a) { return a == Activation::relu ? 0.0 : kLeakySlope; }

// Forward pass keeping what backprop needs.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;   // input to each layer (normalised input first)
  std::vector<Eigen::MatrixXd> preacts;  // z of each hidden layer
  Eigen::MatrixXd sig;                   // sigmoid of the output logits
  Eigen::MatrixXd out;                   // bounded outputs
};

void run_forward(const Model& model, const Eigen::MatrixXd& raw, ForwardCache& cache, bool keep) {
  const ModelSpec& spec = model.spec;
  if (raw.rows() != spec.input_dim) throw std::invalid_argument("input has the wrong dimension for this model");
  const double slope = activation_slope(spec.activation);
  Eigen::MatrixXd a = (raw.colwise() - model.normalizer.mean).array().colwise() / model.normalizer.stddev.array();
  if (keep) {
    cache.inputs.clear();
    cache.preacts.clear();
  }
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const DenseLayer& l = model.layers[k];
    Eigen::MatrixXd z = l.w * a;
    z.colwise() += l.b;
    if (keep) cache.inputs.push_back(std::move(a));
    if (k == last) {
      cache.sig = z.unaryExpr([](double v) { return sigmoid(v); });
      break;
    }
    a = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    if (keep) cache.preacts.push_back(std::move(z));
  }
  const Eigen::VectorXd span = spec.out_max - spec.out_min;
  cache.out = (cache.sig.array().colwise() * span.array()).colwise() + spec.out_min.array();
}

}  // namespace

Eigen::MatrixXd forward(const Model& model, const Eigen::MatrixXd& inputs) {
  ForwardCache cache;
  run_forward(model, inputs, cache, false);
  return std::move(cache.out);
}

VoltageProfile forward(const Model& model, const DemandVector& demand) {
  const Eigen::MatrixXd out = forward(model, stack_inputs({demand}));
  const int n = demand.size();
  return {out.col(0).head(n), out.col(0).tail(n)};
}

PhysicsOutput physics_forward(const Model& model, const Network& network, const AdmittanceMatrix& ybus,
                              const DemandVector& demand) {
  if (model.spec.output_dim != 2 * network.size()) throw std::invalid_argument("model does not match the network");
  VoltageProfile v = forward(model, demand);
  GenSetpoints gen = recover_generation(network, ybus, v, demand);
  PhysicsOutput out;
  out.reconstructed = reconstruct_demand(network, ybus, v, gen);
  out.solution = make_solution(network, ybus, std::move(v), std::move(gen), demand, SolutionSource::nn);
  return out;
}

LossBreakdown loss(const Network& network, const OpfSolution& predicted, const DemandVector& reconstructed,
                   const OpfSolution& label, const DemandVector& input, LossMode mode) {
  const int n = network.size();
  LossBreakdown lb;
  for (int i = 0; i < n; ++i) {
    const double dp = reconstructed.pd(i) - input.pd(i);
    const double dq = reconstructed.qd(i) - input.qd(i);
    const double dv = predicted.voltage.vm(i) - label.voltage.vm(i);
    const double da = predicted.voltage.va(i) - label.voltage.va(i);
    lb.pd_recon_mse += dp * dp / n;
    lb.qd_recon_mse += dq * dq / n;
    lb.v_mse += dv * dv / n;
    lb.phi_mse += da * da / n;
  }
  const auto& gbus = network.generator_buses();
  const double ng = static_cast<double>(gbus.size());
  for (int b : gbus) {
    const double dp = predicted.gen.pg(b) - label.gen.pg(b);
    const double dq = predicted.gen.qg(b) - label.gen.qg(b);
    lb.pg_mse += dp * dp / ng;
    lb.qg_mse += dq * dq / ng;
  }
  if (mode == LossMode::supervised_only) lb.pd_recon_mse = lb.qd_recon_mse = 0.0;
  lb.finalize();
  return lb;
}

Batch Batch::from_samples(const Network& network, const std::vector<LabeledSample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  return from_samples(network, samples, idx);
}

Batch Batch::from_samples(const Network& network, const std::vector<LabeledSample>& samples,
                          const std::vector<std::size_t>& indices) {
  const int n = network.size();
  const auto& gbus = network.generator_buses();
  const auto ng = static_cast<Eigen::Index>(gbus.size());
  const auto bsz = static_cast<Eigen::Index>(indices.size());
  Batch b;
  b.inputs.resize(2 * n, bsz);
  b.vm.resize(n, bsz);
  b.va.resize(n, bsz);
  b.pg.resize(ng, bsz);
  b.qg.resize(ng, bsz);
  for (Eigen::Index c = 0; c < bsz; ++c) {
    const LabeledSample& s = samples.at(indices[static_cast<std::size_t>(c)]);
    b.inputs.col(c).head(n) = s.demand.pd;
    b.inputs.col(c).tail(n) = s.demand.qd;
    b.vm.col(c) = s.solution.voltage.vm;
    b.va.col(c) = s.solution.voltage.va;
    for (Eigen::Index g = 0; g < ng; ++g) {
      b.pg(g, c) = s.solution.gen.pg(gbus[static_cast<std::size_t>(g)]);
      b.qg(g, c) = s.solution.gen.qg(gbus[static_cast<std::size_t>(g)]);
    }
  }
  return b;
}

Eigen::VectorXd ModelGradient::flatten() const {
  Eigen::Index total = 0;
  for (const DenseLayer& l : layers) total += l.w.size() + l.b.size();
  Eigen::VectorXd flat(total);
  Eigen::Index at = 0;
  for (const DenseLayer& l : layers) {
    flat.segment(at, l.w.size()) = l.w.reshaped();
    at += l.w.size();
    flat.segment(at, l.b.size()) = l.b;
    at += l.b.size();
  }
  return flat;
}

LossBreakdown loss_and_gradient(const Model& model, const Eigen::MatrixXcd& ybus, const Network& network,
                                const Batch& batch, LossMode mode, ModelGradient* gradient) {
  const int n = network.size();
  const auto& gbus = network.generator_buses();
  const auto ng = static_cast<Eigen::Index>(gbus.size());
  const Eigen::Index bsz = batch.size();
  if (bsz == 0) throw std::invalid_argument("empty batch");
  if (model.spec.output_dim != 2 * n) throw std::invalid_argument("model does not match the network");

  ForwardCache cache;
  run_forward(model, batch.inputs, cache, gradient != nullptr);
  const auto vm = cache.out.topRows(n);
  const auto va = cache.out.bottomRows(n);
  const auto pd = batch.inputs.topRows(n);
  const auto qd = batch.inputs.bottomRows(n);

  Eigen::MatrixXcd v(n, bsz);
  for (Eigen::Index c = 0; c < bsz; ++c)
    for (int i = 0; i < n; ++i) v(i, c) = std::polar(vm(i, c), va(i, c));
  const Eigen::MatrixXcd current = ybus * v;
  const Eigen::MatrixXcd s = v.cwiseProduct(current.conjugate());
  const Eigen::MatrixXd p = s.real();
  const Eigen::MatrixXd q = s.imag();

  // Dispatch on generator buses, then reconstructed demand everywhere.
  Eigen::MatrixXd pg(ng, bsz), qg(ng, bsz);
  Eigen::MatrixXd pd_hat = -p, qd_hat = -q;
  for (Eigen::Index g = 0; g < ng; ++g) {
    const int b = gbus[static_cast<std::size_t>(g)];
    pg.row(g) = pd.row(b) + p.row(b);
    qg.row(g) = qd.row(b) + q.row(b);
    pd_hat.row(b) = pg.row(g) - p.row(b);
    qd_hat.row(b) = qg.row(g) - q.row(b);
  }

  const double nb = static_cast<double>(n) * static_cast<double>(bsz);
  const double gb = static_cast<double>(ng) * static_cast<double>(bsz);
  const bool physics = mode == LossMode::physics_informed;
  const Eigen::MatrixXd e_pd = pd_hat - pd, e_qd = qd_hat - qd;
  const Eigen::MatrixXd e_vm = vm - batch.vm, e_va = va - batch.va;
  const Eigen::MatrixXd e_pg = pg - batch.pg, e_qg = qg - batch.qg;

  LossBreakdown lb;
  lb.v_mse = e_vm.squaredNorm() / nb;
  lb.phi_mse = e_va.squaredNorm() / nb;
  lb.pg_mse = e_pg.squaredNorm() / gb;
  lb.qg_mse = e_qg.squaredNorm() / gb;
  if (physics) {
    lb.pd_recon_mse = e_pd.squaredNorm() / nb;
    lb.qd_recon_mse = e_qd.squaredNorm() / nb;
  }
  lb.finalize();
  if (gradient == nullptr) return lb;

  // dL/dP and dL/dQ. On generator buses the reconstruction is identically the input, so only the
  // dispatch terms depend on V there; on load buses p_d_hat = -P.
  Eigen::MatrixXd c_p = Eigen::MatrixXd::Zero(n, bsz), c_q = Eigen::MatrixXd::Zero(n, bsz);
  if (physics) {
    c_p = -2.0 / nb * e_pd;
    c_q = -2.0 / nb * e_qd;
  }
  for (Eigen::Index g = 0; g < ng; ++g) {
    const int b = gbus[static_cast<std::size_t>(g)];
    c_p.row(b) = 2.0 / gb * e_pg.row(g);
    c_q.row(b) = 2.0 / gb * e_qg.row(g);
  }
  Eigen::MatrixXcd c(n, bsz);
  c.real() = c_p;
  c.imag() = c_q;
  Eigen::MatrixXd g_va, g_vm;
  injection_vjp(ybus, v, current, c, vm, g_va, g_vm);
  g_vm += 2.0 / nb * e_vm;
  g_va += 2.0 / nb * e_va;

  Eigen::MatrixXd delta(2 * n, bsz);
  delta.topRows(n) = g_vm;
  delta.bottomRows(n) = g_va;
  const Eigen::VectorXd span = model.spec.out_max - model.spec.out_min;
  delta = delta.cwiseProduct((cache.sig.array() * (1.0 - cache.sig.array())).matrix()).array().colwise() *
          span.array();

  const double slope = activation_slope(model.spec.activation);
  gradient->layers.resize(model.layers.size());
  for (std::size_t k = model.layers.size(); k-- > 0;) {
    DenseLayer& gl = gradient->layers[k];
    gl.w.noalias() = delta * cache.inputs[k].transpose();
    gl.b = delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd back = model.layers[k].w.transpose() * delta;
    const Eigen::MatrixXd& z = cache.preacts[k - 1];
    delta = back.binaryExpr(z, [slope](double d, double zz) { return zz > 0.0 ? d : slope * d; });
  }
  return lb;
}

namespace {

constexpr int kCheckpointVersion = 1;

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const json& j, Eigen::Index expected, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != expected)
    throw SchemaError(std::string("checkpoint field '") + what + "' has the wrong length");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), expected);
}

}  // namespace

void save_model(std::ostream& out, const Model& model, std::string_view case_name) {
  json layers = json::array();
  for (const DenseLayer& l : model.layers) {
    Eigen::VectorXd w = l.w.reshaped();
    layers.push_back({{"rows", l.w.rows()}, {"cols", l.w.cols()}, {"w", to_vec(w)}, {"b", to_vec(l.b)}});
  }
  json j = {{"format", "gridflow.model"},
            {"version", kCheckpointVersion},
            {"case", std::string(case_name)},
            {"seed", model.seed},
            {"spec",
             {{"input_dim", model.spec.input_dim},
              {"hidden", model.spec.hidden},
              {"activation", to_string(model.spec.activation)},
              {"output_dim", model.spec.output_dim},
              {"out_min", to_vec(model.spec.out_min)},
              {"out_max", to_vec(model.spec.out_max)}}},
            {"normalizer", {{"mean", to_vec(model.normalizer.mean)}, {"std", to_vec(model.normalizer.stddev)}}},
            {"layers", layers}};
  out << j.dump() << '\n';
}

Model load_model(std::istream& in) {
  Model m;
  try {
    const json j = json::parse(in);
    if (j.value("format", std::string{}) != "gridflow.model") throw SchemaError("not a gridflow model checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw SchemaError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& s = j.at("spec");
    m.spec.input_dim = s.at("input_dim").get<int>();
    m.spec.hidden = s.at("hidden").get<std::vector<int>>();
    m.spec.activation = activation_from_string(s.at("activation").get<std::string>());
    m.spec.output_dim = s.at("output_dim").get<int>();
    m.spec.out_min = from_vec(s.at("out_min"), m.spec.output_dim, "out_min");
    m.spec.out_max = from_vec(s.at("out_max"), m.spec.output_dim, "out_max");
    m.spec.validate();
    m.normalizer.mean = from_vec(j.at("normalizer").at("mean"), m.spec.input_dim, "mean");
    m.normalizer.stddev = from_vec(j.at("normalizer").at("std"), m.spec.input_dim, "std");
    const json& layers = j.at("layers");
    std::vector<int> widths = m.spec.hidden;
    widths.push_back(m.spec.output_dim);
    if (layers.size() != widths.size()) throw SchemaError("checkpoint layer count does not match its spec");
    int fan_in = m.spec.input_dim;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const json& l = layers[k];
      if (l.at("rows").get<int>() != widths[k] || l.at("cols").get<int>() != fan_in)
        throw SchemaError("checkpoint layer " + std::to_string(k) + " has the wrong shape");
      DenseLayer dl;
      dl.w = from_vec(l.at("w"), static_cast<Eigen::Index>(widths[k]) * fan_in, "w").reshaped(widths[k], fan_in);
      dl.b = from_vec(l.at("b"), widths[k], "b");
      m.layers.push_back(std::move(dl));
      fan_in = widths[k];
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed model checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("invalid model checkpoint: ") + e.what());
  }
  return m;
}

void save_model(const std::string& path, const Model& model, std::string_view case_name) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model file " + path);
  save_model(out, model, case_name);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("model file not found: " + path);
  return load_model(in);
}

}  // namespace gridflow
