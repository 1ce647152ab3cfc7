#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gridflow/dataset.hpp"
#include "gridflow/neural.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/refsolver.hpp"
#include "gridflow/train.hpp"
#include "gradient_check.hpp"
#include "test_support.hpp"

using namespace gridflow;
using gridflow::testing::gradient_check;
using gridflow::testing::load_bundled;

namespace {

const std::vector<int> kDefaultWidths{512, 256, 128, 64};

// Labels near nominal for a small network, solved by the reference solver.
std::vector<LabeledSample> small_dataset(const Network& net, int count, std::uint64_t seed) {
  GenerationOptions opts;
  return generate_dataset(net, count, {0.9, 1.1}, seed, opts).samples;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Scalar re-evaluation of the training loss for one sample, straight from its definition.
double naive_loss(const Network& net, const AdmittanceMatrix& y, const VoltageProfile& v, const LabeledSample& s,
                  bool physics) {
  const int n = net.size();
  const Eigen::VectorXcd vc = v.phasors();
  double recon = 0.0, volt = 0.0, gen = 0.0;
  for (int i = 0; i < n; ++i) {
    Complex si = 0.0;
    for (int j = 0; j < n; ++j) si += vc(i) * std::conj(y(i, j) * vc(j));
    double pg = 0.0, qg = 0.0;
    if (net.is_generator_bus(i)) {
      pg = s.demand.pd(i) + si.real();
      qg = s.demand.qd(i) + si.imag();
      const double dp = pg - s.solution.gen.pg(i), dq = qg - s.solution.gen.qg(i);
      gen += dp * dp + dq * dq;
    }
    const double pd_hat = pg - si.real(), qd_hat = qg - si.imag();
    if (physics) recon += std::pow(pd_hat - s.demand.pd(i), 2) + std::pow(qd_hat - s.demand.qd(i), 2);
    volt += std::pow(v.vm(i) - s.solution.voltage.vm(i), 2) + std::pow(v.va(i) - s.solution.voltage.va(i), 2);
  }
  return (recon + volt) / n + gen / static_cast<double>(net.generator_buses().size());
}

Model random_model(const Network& net, std::vector<int> hidden, std::uint64_t seed, const Eigen::MatrixXd& inputs) {
  Model m = init_model(ModelSpec::for_network(net, std::move(hidden)), seed);
  m.normalizer = Normalizer::fit(inputs);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> g(0.0, 0.1);
  for (DenseLayer& l : m.layers)
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b(i) = g(rng);
  return m;
}

}  // namespace

TEST(ModelSpec, ParameterCountsOfTableWidths) {
  EXPECT_EQ(init_model(ModelSpec::for_network(load_bundled("case14"), kDefaultWidths), 0).parameter_count(), 189148u);
  EXPECT_EQ(init_model(ModelSpec::for_network(load_bundled("case118"), kDefaultWidths), 0).parameter_count(), 309164u);
}

TEST(ModelSpec, Validation) {
  ModelSpec s = ModelSpec::for_network(gridflow::testing::two_bus(), {4});
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.input_dim, 4);
  EXPECT_EQ(s.output_dim, 4);
  s.hidden = {0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = ModelSpec::for_network(gridflow::testing::two_bus(), {4});
  s.out_min(0) = s.out_max(0);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(activation_from_string("relu"), Activation::relu);
  EXPECT_EQ(activation_from_string(to_string(Activation::leaky_relu)), Activation::leaky_relu);
  EXPECT_THROW(activation_from_string("tanh"), std::invalid_argument);
  EXPECT_EQ(loss_mode_from_string("supervised"), LossMode::supervised_only);
  EXPECT_EQ(loss_mode_from_string("physics_informed"), LossMode::physics_informed);
  EXPECT_THROW(loss_mode_from_string("other"), std::invalid_argument);
}

TEST(InitModel, DeterministicInSeed) {
  const ModelSpec spec = ModelSpec::for_network(load_bundled("case14"), {32, 16});
  const Model a = init_model(spec, 7), b = init_model(spec, 7), c = init_model(spec, 8);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_FALSE(a == c);
  for (const DenseLayer& l : a.layers) {
    EXPECT_TRUE(l.b.isZero());
    EXPECT_LE(l.w.cwiseAbs().maxCoeff(), std::sqrt(6.0 / static_cast<double>(l.w.cols())));
  }
}

TEST(Forward, ZeroHiddenLayersIsBoundedAffine) {
  const Network net = load_bundled("case14");
  const Model m = init_model(ModelSpec::for_network(net, {}), 3);
  ASSERT_EQ(m.layers.size(), 1u);
  const DemandVector d = nominal_demand(net);
  const Eigen::MatrixXd x = stack_inputs({d});
  const Eigen::VectorXd z = m.layers[0].w * x.col(0) + m.layers[0].b;
  const Eigen::MatrixXd out = forward(m, x);
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double expected = m.spec.out_min(k) + (m.spec.out_max(k) - m.spec.out_min(k)) / (1.0 + std::exp(-z(k)));
    EXPECT_NEAR(out(k, 0), expected, 1e-15);
  }
}

TEST(Forward, SigmoidMidpointAndSaturation) {
  const Network net = load_bundled("case14");
  Model m = init_model(ModelSpec::for_network(net, {}), 3);
  m.layers[0].w.setZero();
  m.layers[0].b.setZero();
  const Eigen::MatrixXd x = stack_inputs({nominal_demand(net)});
  Eigen::MatrixXd out = forward(m, x);
  for (Eigen::Index k = 0; k < out.rows(); ++k)
    EXPECT_NEAR(out(k, 0), 0.5 * (m.spec.out_min(k) + m.spec.out_max(k)), 1e-15);
  m.layers[0].b.setConstant(40.0);
  out = forward(m, x);
  for (Eigen::Index k = 0; k < out.rows(); ++k) EXPECT_NEAR(out(k, 0), m.spec.out_max(k), 1e-6);
}

TEST(Forward, OutputsStrictlyInsideBounds) {
  const Network net = load_bundled("case14");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Model m = init_model(ModelSpec::for_network(net, {16, 16}), seed);
    DemandVector d = nominal_demand(net);
    for (int i = 0; i < net.size(); ++i) d.pd(i) *= u(rng);
    const VoltageProfile v = forward(m, d);
    for (const Bus& b : net.buses()) {
      EXPECT_GT(v.vm(b.id), b.v_min);
      EXPECT_LT(v.vm(b.id), b.v_max);
      EXPECT_GT(v.va(b.id), b.ang_min);
      EXPECT_LT(v.va(b.id), b.ang_max);
    }
  }
}

TEST(PhysicsForward, GeneratorBusIdentities) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const Model m = init_model(ModelSpec::for_network(net, {16}), 4);
  const DemandVector d = nominal_demand(net);
  const PhysicsOutput out = physics_forward(m, net, y, d);
  const Eigen::VectorXcd s = bus_injections(y, out.solution.voltage);
  for (int b : net.generator_buses()) {
    EXPECT_NEAR(out.reconstructed.pd(b), d.pd(b), 1e-12);
    EXPECT_NEAR(out.reconstructed.qd(b), d.qd(b), 1e-12);
    EXPECT_NEAR(out.solution.gen.pg(b), d.pd(b) + s(b).real(), 1e-12);
    EXPECT_NEAR(out.solution.gen.qg(b), d.qd(b) + s(b).imag(), 1e-12);
  }
  for (int b : net.load_buses()) {
    EXPECT_EQ(out.solution.gen.pg(b), 0.0);
    EXPECT_NEAR(out.reconstructed.pd(b), -s(b).real(), 1e-15);
  }
  EXPECT_EQ(out.solution.source, SolutionSource::nn);
}

TEST(PhysicsForward, ExactVoltagesReproduceLabel) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  const OpfSolution label = solve_acopf(net, y, d).solution;
  Model m = init_model(ModelSpec::for_network(net, {}), 0);
  m.layers[0].w.setZero();
  const int n = net.size();
  for (int i = 0; i < 2 * n; ++i) {
    const double target = i < n ? label.voltage.vm(i) : label.voltage.va(i - n);
    m.layers[0].b(i) = logit((target - m.spec.out_min(i)) / (m.spec.out_max(i) - m.spec.out_min(i)));
  }
  const PhysicsOutput out = physics_forward(m, net, y, d);
  EXPECT_LT((out.solution.voltage.vm - label.voltage.vm).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.solution.voltage.va - label.voltage.va).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.reconstructed.pd - d.pd).cwiseAbs().maxCoeff(), 1e-6);
  const LossBreakdown l = loss(net, out.solution, out.reconstructed, label, d);
  EXPECT_LT(l.total, 1e-12);
}

TEST(Loss, HandExamples) {
  const Network net = gridflow::testing::two_bus();
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  const OpfSolution label = solve_acopf(net, y, d).solution;
  EXPECT_EQ(loss(net, label, d, label, d).total, 0.0);
  OpfSolution pred = label;
  pred.voltage.vm.array() += 0.1;
  const LossBreakdown l = loss(net, pred, d, label, d);
  EXPECT_NEAR(l.v_mse, 0.01, 1e-15);
  EXPECT_NEAR(l.total, 0.01, 1e-15);
  DemandVector recon = d;
  recon.pd(1) += 0.2;
  const LossBreakdown p = loss(net, label, recon, label, d);
  EXPECT_NEAR(p.pd_recon_mse, 0.02, 1e-15);
  EXPECT_EQ(loss(net, label, recon, label, d, LossMode::supervised_only).total, 0.0);
}

TEST(Loss, BatchMatchesNaiveScalarEvaluation) {
  for (const Network& net : {gridflow::testing::three_bus(), load_bundled("case14")}) {
    const AdmittanceMatrix y = build_ybus(net);
    const auto samples = small_dataset(net, 6, 2);
    const Batch batch = Batch::from_samples(net, samples);
    const Model m = random_model(net, {8, 8}, 11, batch.inputs);
    for (LossMode mode : {LossMode::physics_informed, LossMode::supervised_only}) {
      const LossBreakdown l = loss_and_gradient(m, y.y, net, batch, mode, nullptr);
      double naive = 0.0, scalar = 0.0;
      for (const LabeledSample& s : samples) {
        const PhysicsOutput out = physics_forward(m, net, y, s.demand);
        naive += naive_loss(net, y, out.solution.voltage, s, mode == LossMode::physics_informed);
        scalar += loss(net, out.solution, out.reconstructed, s.solution, s.demand, mode).total;
      }
      naive /= static_cast<double>(samples.size());
      scalar /= static_cast<double>(samples.size());
      EXPECT_NEAR(l.total, naive, 1e-12) << net.name();
      EXPECT_NEAR(l.total, scalar, 1e-12) << net.name();
      EXPECT_NEAR(l.total, l.pd_recon_mse + l.qd_recon_mse + l.v_mse + l.phi_mse + l.pg_mse + l.qg_mse, 1e-12);
    }
  }
}

TEST(Gradient, MatchesFiniteDifferencesThreeBus) {
  const Network net = gridflow::testing::three_bus();
  const AdmittanceMatrix y = build_ybus(net);
  const Batch batch = Batch::from_samples(net, small_dataset(net, 4, 3));
  const Model m = random_model(net, {8, 8}, 5, batch.inputs);
  EXPECT_LT(gradient_check(m, net, y, batch, LossMode::physics_informed), 1e-5);
  EXPECT_LT(gradient_check(m, net, y, batch, LossMode::supervised_only), 1e-5);
}

TEST(Gradient, MatchesFiniteDifferencesCase14) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const Batch batch = Batch::from_samples(net, small_dataset(net, 3, 4));
  Model m = random_model(net, {8, 8}, 6, batch.inputs);
  m.spec.activation = Activation::relu;
  EXPECT_LT(gradient_check(m, net, y, batch, LossMode::physics_informed), 1e-5);
}

TEST(Gradient, ZeroWeightModelBiasGradients) {
  const Network net = gridflow::testing::three_bus();
  const AdmittanceMatrix y = build_ybus(net);
  const Batch batch = Batch::from_samples(net, small_dataset(net, 4, 8));
  Model m = init_model(ModelSpec::for_network(net, {4}), 1);
  for (DenseLayer& l : m.layers) l.w.setZero();
  EXPECT_LT(gradient_check(m, net, y, batch, LossMode::physics_informed), 1e-6);
}

TEST(Gradient, SupervisedEqualsPhysicsWithoutReconstructionTerms) {
  // With a generator on every bus the reconstruction is exact for any output, so the two
  // modes must agree term by term and in every gradient entry.
  const Network base = gridflow::testing::two_bus();
  std::vector<Generator> gens = base.generators();
  Generator second = gens[0];
  second.bus = 1;
  gens.push_back(second);
  const Network net = Network::create("all_gen", 100.0, base.buses(), gens, base.branches());
  const AdmittanceMatrix y = build_ybus(net);
  const Batch batch = Batch::from_samples(net, small_dataset(net, 4, 9));
  const Model m = random_model(net, {6, 6}, 2, batch.inputs);
  ModelGradient gp, gs;
  const LossBreakdown lp = loss_and_gradient(m, y.y, net, batch, LossMode::physics_informed, &gp);
  const LossBreakdown ls = loss_and_gradient(m, y.y, net, batch, LossMode::supervised_only, &gs);
  EXPECT_LT(lp.pd_recon_mse + lp.qd_recon_mse, 1e-24);
  EXPECT_NEAR(lp.total, ls.total, 1e-12);
  EXPECT_LT((gp.flatten() - gs.flatten()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Train, MemorisesSingleSample) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const auto samples = small_dataset(net, 1, 12);
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.validation_fraction = 0.0;
  cfg.seed = 1;
  const TrainResult r = train(init_model(ModelSpec::for_network(net, {64, 64}), 1), net, y, samples, cfg);
  ASSERT_EQ(r.history.size(), 500u);
  EXPECT_FALSE(r.diverged);
  const LossBreakdown final_loss =
      loss_and_gradient(r.model, y.y, net, Batch::from_samples(net, samples), cfg.loss_mode, nullptr);
  EXPECT_LT(final_loss.total, 1e-6);
}

TEST(Train, DeterministicWithValidationSelection) {
  const Network net = gridflow::testing::three_bus();
  const AdmittanceMatrix y = build_ybus(net);
  const auto samples = small_dataset(net, 40, 13);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 8;
  cfg.seed = 4;
  cfg.validation_fraction = 0.25;
  const Model init = init_model(ModelSpec::for_network(net, {8}), 2);
  int callbacks = 0;
  const TrainResult a = train(init, net, y, samples, cfg, [&](const EpochRecord&) { ++callbacks; });
  const TrainResult b = train(init, net, y, samples, cfg);
  EXPECT_EQ(callbacks, 15);
  ASSERT_EQ(a.history.size(), 15u);
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    EXPECT_EQ(a.history[k].train.total, b.history[k].train.total);
    EXPECT_EQ(a.history[k].validation.total, b.history[k].validation.total);
  }
  EXPECT_TRUE(a.model == b.model);
  double best = 1e300;
  int best_epoch = -1;
  for (const EpochRecord& e : a.history)
    if (e.validation.total < best) {
      best = e.validation.total;
      best_epoch = e.epoch;
    }
  EXPECT_EQ(a.best_epoch, best_epoch);
  // learning rate decays by half every 100 epochs by default; only the first step applies here
  EXPECT_EQ(a.history.back().learning_rate, cfg.learning_rate);
  TrainConfig bad = cfg;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  EXPECT_THROW(train(init, net, y, {}, cfg), std::invalid_argument);
}

TEST(Normalizer, ConstantFeaturesKeepUnitScale) {
  Eigen::MatrixXd x(2, 3);
  x << 1, 2, 3, 5, 5, 5;
  const Normalizer nz = Normalizer::fit(x);
  EXPECT_DOUBLE_EQ(nz.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(nz.stddev(1), 1.0);
  EXPECT_GT(nz.stddev(0), 0.0);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const Network net = load_bundled("case14");
  Model m = init_model(ModelSpec::for_network(net, {16, 8}, Activation::relu), 99);
  m.normalizer = Normalizer::fit(stack_inputs(sample_demands(net, 20, {0.8, 1.2}, 1)));
  std::stringstream ss;
  save_model(ss, m, "case14");
  const Model back = load_model(ss);
  EXPECT_TRUE(back == m);
  const Eigen::MatrixXd x = stack_inputs(sample_demands(net, 5, {0.8, 1.2}, 2));
  EXPECT_EQ(forward(back, x), forward(m, x));
  std::istringstream junk("{\"schema\": \"gridflow.model\", \"version\": 99}");
  EXPECT_THROW(load_model(junk), Error);
  EXPECT_THROW(load_model(std::string("/nonexistent/model.json")), Error);
}

TEST(Evaluate, PerfectPredictionsAndGapArithmetic) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const auto samples = small_dataset(net, 3, 14);
  std::vector<Prediction> exact;
  for (const LabeledSample& s : samples) exact.push_back({s.scenario_id, s.solution});
  const EvalMetrics m = compute_metrics(net, y, exact, samples);
  EXPECT_EQ(m.count, 3);
  EXPECT_EQ(m.v_mse, 0.0);
  EXPECT_EQ(m.pg_mse, 0.0);
  EXPECT_LT(std::abs(m.optimality_gap), 1e-12);
  EXPECT_LT(m.feasibility, 1e-6);

  std::vector<LabeledSample> scaled(samples.begin(), samples.begin() + 1);
  scaled[0].solution.objective = clipped_cost(net, samples[0].solution.gen) / 1.0067;
  const EvalMetrics g = compute_metrics(net, y, {exact[0]}, scaled);
  EXPECT_NEAR(g.optimality_gap, 0.0067, 1e-12);
}

TEST(Evaluate, PredictionsCsvRecomputesMetrics) {
  const Network net = load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const auto samples = small_dataset(net, 10, 15);
  const Model m = random_model(net, {8}, 3, stack_inputs({samples[0].demand, samples[1].demand}));
  const std::vector<Prediction> preds = predict(m, net, y, samples);
  const EvalMetrics direct = compute_metrics(net, y, preds, samples);
  std::stringstream ss;
  write_predictions_csv(ss, net, preds);
  const std::vector<Prediction> back = read_predictions_csv(ss, net, y, samples, SolutionSource::nn);
  ASSERT_EQ(back.size(), preds.size());
  // independent recomputation from the parsed file
  double v = 0, feas = 0, gap = 0;
  for (std::size_t k = 0; k < back.size(); ++k) {
    const Prediction& p = back[k];
    const LabeledSample& s = samples[k];
    ASSERT_EQ(p.scenario_id, s.scenario_id);
    v += (p.solution.voltage.vm - s.solution.voltage.vm).squaredNorm() / net.size();
    feas += residual_check(net, y, p.solution.voltage, s.demand, p.solution.gen).mean_abs;
    GenSetpoints clipped = p.solution.gen;
    for (const Generator& g : net.generators()) {
      clipped.pg(g.bus) = std::clamp(clipped.pg(g.bus), g.p_min, g.p_max);
      clipped.qg(g.bus) = std::clamp(clipped.qg(g.bus), g.q_min, g.q_max);
    }
    gap += (generation_cost(net, clipped) - s.solution.objective) / s.solution.objective;
  }
  const double c = static_cast<double>(back.size());
  EXPECT_NEAR(direct.v_mse, v / c, 1e-10);
  EXPECT_NEAR(direct.feasibility, feas / c, 1e-10);
  EXPECT_NEAR(direct.optimality_gap, gap / c, 1e-10);
  const EvalMetrics reread = compute_metrics(net, y, back, samples);
  EXPECT_EQ(reread.v_mse, direct.v_mse);
  EXPECT_EQ(reread.qg_mse, direct.qg_mse);
  EXPECT_EQ(evaluate(m, net, y, samples).feasibility, direct.feasibility);
}
