#include <random>
#include <string>

#include <benchmark/benchmark.h>

#include "gridflow/calibration.hpp"
#include "gridflow/dataset.hpp"
#include "gridflow/neural.hpp"
#include "gridflow/powerflow.hpp"
#include "gridflow/refsolver.hpp"

using namespace gridflow;

namespace {

const char* case_name(int64_t which) { return which == 0 ? "case14" : "case118"; }

Network bundled(int64_t which) { return load_case(std::string(GRIDFLOW_BENCH_CASES_DIR) + "/" + case_name(which) + ".m"); }

// label plus a perturbed copy, the typical calibration input
struct Scenario {
  Network net;
  AdmittanceMatrix y;
  LabeledSample label;
  OpfSolution noisy;
};

Scenario scenario(int64_t which) {
  Scenario s{bundled(which), {}, {}, {}};
  s.y = build_ybus(s.net);
  s.label = generate_dataset(s.net, 1, {0.9, 1.1}, 1).samples.front();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.005);
  VoltageProfile v = s.label.solution.voltage;
  for (int i = 0; i < v.size(); ++i) {
    v.vm(i) += g(rng);
    v.va(i) += g(rng);
  }
  const GenSetpoints gen = recover_generation(s.net, s.y, v, s.label.demand);
  s.noisy = make_solution(s.net, s.y, v, gen, s.label.demand, SolutionSource::nn);
  return s;
}

}  // namespace

static void BM_BuildYbus(benchmark::State& state) {
  const Network net = bundled(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_ybus(net));
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_BuildYbus)->Arg(0)->Arg(1);

static void BM_BusInjections(benchmark::State& state) {
  const Network net = bundled(state.range(0));
  const AdmittanceMatrix y = build_ybus(net);
  const VoltageProfile v = case_start(net);
  for (auto _ : state) benchmark::DoNotOptimize(bus_injections(y, v));
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_BusInjections)->Arg(0)->Arg(1);

static void BM_NewtonRaphson(benchmark::State& state) {
  const Network net = bundled(state.range(0));
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  const GenSetpoints gen = case_dispatch(net);
  for (auto _ : state) benchmark::DoNotOptimize(solve_newton_raphson(net, y, d, case_start(net), gen));
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_NewtonRaphson)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

static void BM_Calibrate(benchmark::State& state) {
  const Scenario s = scenario(state.range(0));
  int epochs = 0;
  for (auto _ : state) {
    const CalibrationOutcome out = calibrate(s.net, s.y, s.label.demand, s.noisy);
    epochs = out.epochs_used;
    benchmark::DoNotOptimize(out);
  }
  state.counters["epochs"] = epochs;
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_Calibrate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_ForwardBatch(benchmark::State& state) {
  const Network net = bundled(state.range(0));
  const Model m = init_model(ModelSpec::for_network(net, {512, 256, 128, 64}), 1);
  const Eigen::MatrixXd inputs = Eigen::MatrixXd::Random(m.spec.input_dim, 128);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, inputs));
  state.SetItemsProcessed(state.iterations() * 128);
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_ForwardBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

static void BM_LossAndGradient(benchmark::State& state) {
  const Network net = bundled(state.range(0));
  const AdmittanceMatrix y = build_ybus(net);
  const auto samples = generate_dataset(net, 32, {0.9, 1.1}, 2).samples;
  const Batch batch = Batch::from_samples(net, samples);
  Model m = init_model(ModelSpec::for_network(net, {512, 256, 128, 64}), 1);
  m.normalizer = Normalizer::fit(batch.inputs);
  ModelGradient grad;
  for (auto _ : state)
    benchmark::DoNotOptimize(loss_and_gradient(m, y.y, net, batch, LossMode::physics_informed, &grad));
  state.SetItemsProcessed(state.iterations() * 32);
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_LossAndGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_SolveAcopf(benchmark::State& state) {
  const Network net = bundled(state.range(0));
  const AdmittanceMatrix y = build_ybus(net);
  const DemandVector d = nominal_demand(net);
  for (auto _ : state) benchmark::DoNotOptimize(solve_acopf(net, y, d));
  state.SetLabel(case_name(state.range(0)));
}
BENCHMARK(BM_SolveAcopf)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
