#include "gridflow/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "gridflow/error.hpp"
#include "gridflow/powerflow.hpp"

namespace gridflow {

void CalibrationConfig::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("calibration rho must be positive");
  if (max_epochs < 1) throw std::invalid_argument("calibration max_epochs must be at least 1");
}

double clip_scalar(double z, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clip bounds are inverted");
  return std::max(std::min(z, hi), lo);
}

VoltageClip clip_voltage_detailed(Complex v, const Bus& bus, double angle_hint) {
  VoltageClip c;
  const double mag = std::abs(v);
  const double ang = angle_hint + std::arg(v * std::polar(1.0, -angle_hint));
  c.magnitude = clip_scalar(mag, bus.v_min, bus.v_max);
  c.angle = clip_scalar(ang, bus.ang_min, bus.ang_max);
  c.magnitude_clipped = c.magnitude != mag;
  c.angle_clipped = c.angle != ang;
  c.value = std::polar(c.magnitude, c.angle);
  return c;
}

Complex clip_voltage(Complex v, const Bus& bus) { return clip_voltage_detailed(v, bus).value; }

namespace {

double stop_value(const ResidualReport& r, StopMetric metric) {
  return metric == StopMetric::mean ? r.mean_abs : r.max_abs;
}

}  // namespace

CalibrationOutcome calibrate(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand,
                             const OpfSolution& candidate, const CalibrationConfig& config) {
  config.validate();
  const int n = network.size();
  if (candidate.voltage.size() != n || candidate.gen.size() != n || demand.size() != n)
    throw SchemaError("calibration inputs do not match the network dimension");

  Eigen::VectorXd vm = candidate.voltage.vm;
  Eigen::VectorXd va = candidate.voltage.va;
  GenSetpoints gen = candidate.gen;
  Eigen::VectorXcd v(n);
  std::vector<char> release_p(static_cast<std::size_t>(n), 0);
  std::vector<char> release_q(static_cast<std::size_t>(n), 0);

  // Entry projection onto the generator and voltage boxes.
  ClipEvents entry;
  for (const Bus& b : network.buses()) {
    const double m = clip_scalar(vm(b.id), b.v_min, b.v_max);
    const double a = clip_scalar(va(b.id), b.ang_min, b.ang_max);
    entry.vm += m != vm(b.id);
    entry.va += a != va(b.id);
    vm(b.id) = m;
    va(b.id) = a;
    v(b.id) = std::polar(m, a);
    if (!network.is_generator_bus(b.id)) {
      gen.pg(b.id) = 0.0;
      gen.qg(b.id) = 0.0;
    }
  }
  for (const Generator& g : network.generators()) {
    const double p = clip_scalar(gen.pg(g.bus), g.p_min, g.p_max);
    const double q = clip_scalar(gen.qg(g.bus), g.q_min, g.q_max);
    entry.pg += p != gen.pg(g.bus);
    entry.qg += q != gen.qg(g.bus);
    gen.pg(g.bus) = p;
    gen.qg(g.bus) = q;
  }

  CalibrationOutcome out;
  out.clip_events = entry;
  ResidualReport r = residual_check(ybus, v, demand, gen);
  if (config.record_trace) out.trace.push_back({0, r.mean_abs, r.max_abs, entry});

  const int ref = network.reference_bus();
  int epoch = 0;
  while (stop_value(r, config.stop_metric) > config.rho && epoch < config.max_epochs) {
    ++epoch;
    ClipEvents clips;

    for (int i = 0; i < n; ++i) {
      const bool is_gen = network.is_generator_bus(i);
      const bool released =
          is_gen && config.release_clipped_generators && (release_p[static_cast<std::size_t>(i)] != 0 ||
                                                          release_q[static_cast<std::size_t>(i)] != 0);
      if (is_gen && !released) continue;
      const Complex injection(gen.pg(i) - demand.pd(i), gen.qg(i) - demand.qd(i));
      const Complex next = gauss_seidel_update(ybus, v, injection, i);
      double m = std::abs(next);
      double a = va(i) + std::arg(next * std::polar(1.0, -va(i)));
      if (released) {
        if (release_q[static_cast<std::size_t>(i)] == 0) m = vm(i);
        if (release_p[static_cast<std::size_t>(i)] == 0) a = va(i);
      }
      if (i == ref && config.pin_reference_angle) a = va(i);
      const Bus& b = network.bus(i);
      const double mc = clip_scalar(m, b.v_min, b.v_max);
      const double ac = clip_scalar(a, b.ang_min, b.ang_max);
      clips.vm += mc != m;
      clips.va += ac != a;
      vm(i) = mc;
      va(i) = ac;
      v(i) = std::polar(mc, ac);
    }

    const Eigen::VectorXcd s = bus_injections(ybus, v);
    for (const Generator& g : network.generators()) {
      const double p = demand.pd(g.bus) + s(g.bus).real();
      const double q = demand.qd(g.bus) + s(g.bus).imag();
      gen.pg(g.bus) = clip_scalar(p, g.p_min, g.p_max);
      gen.qg(g.bus) = clip_scalar(q, g.q_min, g.q_max);
      const bool cp = gen.pg(g.bus) != p;
      const bool cq = gen.qg(g.bus) != q;
      clips.pg += cp;
      clips.qg += cq;
      release_p[static_cast<std::size_t>(g.bus)] = cp;
      release_q[static_cast<std::size_t>(g.bus)] = cq;
    }

    r = residual_check(ybus, v, demand, gen);
    out.clip_events += clips;
    if (config.record_trace) out.trace.push_back({epoch, r.mean_abs, r.max_abs, clips});
  }

  out.converged = stop_value(r, config.stop_metric) <= config.rho;
  out.epochs_used = epoch;
  out.solution.voltage = {vm, va};
  out.solution.gen = std::move(gen);
  out.solution.objective = generation_cost(network, out.solution.gen);
  out.solution.feasibility = {r.mean_abs, r.max_abs};
  out.solution.source = SolutionSource::calibrated;
  return out;
}

void write_trace_csv(std::ostream& out, const CalibrationOutcome& outcome) {
  out << "epoch,mean_abs,max_abs,clip_events\n";
  const auto old = out.precision(17);
  for (const TraceEntry& t : outcome.trace)
    out << t.epoch << ',' << t.mean_abs << ',' << t.max_abs << ',' << t.clips.total() << '\n';
  out.precision(old);
}

}  // namespace gridflow
