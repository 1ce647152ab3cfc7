#include "gridflow/powerflow.hpp"

#include <algorithm>
#include <cmath>

#include "gridflow/derivatives.hpp"
#include "gridflow/error.hpp"

namespace gridflow {

Eigen::VectorXcd bus_injections(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v) {
  const Eigen::VectorXcd current = ybus.y * v;
  return v.cwiseProduct(current.conjugate());
}

Eigen::VectorXcd bus_injections(const AdmittanceMatrix& ybus, const VoltageProfile& v) {
  return bus_injections(ybus, v.phasors());
}

GenSetpoints recover_generation(const Network& network, const AdmittanceMatrix& ybus, const VoltageProfile& v,
                                const DemandVector& demand) {
  const Eigen::VectorXcd s = bus_injections(ybus, v);
  GenSetpoints gen = GenSetpoints::zero(network.size());
  for (int g : network.generator_buses()) {
    gen.pg(g) = demand.pd(g) + s(g).real();
    gen.qg(g) = demand.qd(g) + s(g).imag();
  }
  return gen;
}

DemandVector reconstruct_demand(const Network& network, const AdmittanceMatrix& ybus, const VoltageProfile& v,
                                const GenSetpoints& gen) {
  const Eigen::VectorXcd s = bus_injections(ybus, v);
  DemandVector d = DemandVector::zero(network.size());
  for (int i = 0; i < network.size(); ++i) {
    d.pd(i) = gen.pg(i) - s(i).real();
    d.qd(i) = gen.qg(i) - s(i).imag();
  }
  return d;
}

ResidualReport residual_check(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v, const DemandVector& demand,
                              const GenSetpoints& gen) {
  const Eigen::VectorXcd s = bus_injections(ybus, v);
  ResidualReport r;
  const Eigen::Index n = v.size();
  r.per_bus_mismatch.resize(n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.per_bus_mismatch(i) = Complex(gen.pg(i) - demand.pd(i), gen.qg(i) - demand.qd(i)) - s(i);
    const double m = std::abs(r.per_bus_mismatch(i));
    sum += m;
    r.max_abs = std::max(r.max_abs, m);
  }
  r.mean_abs = n > 0 ? sum / static_cast<double>(n) : 0.0;
  return r;
}

ResidualReport residual_check(const Network&, const AdmittanceMatrix& ybus, const VoltageProfile& v,
                              const DemandVector& demand, const GenSetpoints& gen) {
  return residual_check(ybus, v.phasors(), demand, gen);
}

VoltageProfile case_start(const Network& network) {
  VoltageProfile v = VoltageProfile::flat(network.size());
  for (const Generator& g : network.generators()) v.vm(g.bus) = g.v_setpoint;
  v.va(network.reference_bus()) = network.bus(network.reference_bus()).va_case;
  return v;
}

GenSetpoints case_dispatch(const Network& network) {
  GenSetpoints gen = GenSetpoints::zero(network.size());
  for (const Generator& g : network.generators()) {
    gen.pg(g.bus) = g.p_setpoint;
    gen.qg(g.bus) = g.q_setpoint;
  }
  return gen;
}

namespace {

struct Partition {
  std::vector<int> pv;
  std::vector<int> pq;
  std::vector<int> pvpq;
};

Partition partition(const Network& network) {
  Partition p;
  for (int i = 0; i < network.size(); ++i) {
    if (i == network.reference_bus()) continue;
    (network.is_generator_bus(i) ? p.pv : p.pq).push_back(i);
    p.pvpq.push_back(i);
  }
  return p;
}

// Specified net injection P_G - P_D + j(Q_G - Q_D); Q is only meaningful on PQ buses.
Eigen::VectorXcd specified_injection(const Network& network, const DemandVector& demand,
                                     const GenSetpoints& dispatch) {
  Eigen::VectorXcd s(network.size());
  for (int i = 0; i < network.size(); ++i) {
    const bool gen = network.is_generator_bus(i);
    s(i) = Complex((gen ? dispatch.pg(i) : 0.0) - demand.pd(i), (gen ? dispatch.qg(i) : 0.0) - demand.qd(i));
  }
  return s;
}

double partition_mismatch(const Partition& p, const Eigen::VectorXcd& calc, const Eigen::VectorXcd& spec,
                          Eigen::VectorXd* f) {
  const std::size_t npvpq = p.pvpq.size();
  if (f != nullptr) f->resize(static_cast<Eigen::Index>(npvpq + p.pq.size()));
  double worst = 0.0;
  for (std::size_t k = 0; k < npvpq; ++k) {
    const double d = calc(p.pvpq[k]).real() - spec(p.pvpq[k]).real();
    if (f != nullptr) (*f)(static_cast<Eigen::Index>(k)) = d;
    worst = std::max(worst, std::abs(d));
  }
  for (std::size_t k = 0; k < p.pq.size(); ++k) {
    const double d = calc(p.pq[k]).imag() - spec(p.pq[k]).imag();
    if (f != nullptr) (*f)(static_cast<Eigen::Index>(npvpq + k)) = d;
    worst = std::max(worst, std::abs(d));
  }
  return std::isfinite(worst) ? worst : HUGE_VAL;
}

PFResult finish(const Network& network, const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v,
                const DemandVector& demand, bool converged, int iterations, double residual, std::string msg) {
  PFResult r;
  r.voltage = VoltageProfile::from_phasors(v);
  r.gen = recover_generation(network, ybus, r.voltage, demand);
  r.converged = converged;
  r.iterations = iterations;
  r.final_residual = residual;
  r.message = std::move(msg);
  return r;
}

}  // namespace

PFResult solve_newton_raphson(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand,
                              const VoltageProfile& init, const GenSetpoints& dispatch,
                              const PowerFlowOptions& options) {
  const Partition p = partition(network);
  const Eigen::VectorXcd spec = specified_injection(network, demand, dispatch);
  Eigen::VectorXd vm = init.vm;
  Eigen::VectorXd va = init.va;
  auto phasors = [&] {
    Eigen::VectorXcd v(vm.size());
    for (Eigen::Index i = 0; i < vm.size(); ++i) v(i) = std::polar(vm(i), va(i));
    return v;
  };

  const auto npvpq = static_cast<Eigen::Index>(p.pvpq.size());
  const auto npq = static_cast<Eigen::Index>(p.pq.size());
  Eigen::VectorXcd v = phasors();
  Eigen::VectorXd f;
  double worst = partition_mismatch(p, bus_injections(ybus, v), spec, &f);
  int iter = 0;
  while (worst >= options.tol && iter < options.max_iter) {
    ++iter;
    const InjectionJacobian jac = injection_jacobian(ybus, v);
    Eigen::MatrixXd j(npvpq + npq, npvpq + npq);
    for (Eigen::Index r = 0; r < npvpq; ++r) {
      const int i = p.pvpq[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < npvpq; ++c) j(r, c) = jac.d_angle(i, p.pvpq[static_cast<std::size_t>(c)]).real();
      for (Eigen::Index c = 0; c < npq; ++c) j(r, npvpq + c) = jac.d_magnitude(i, p.pq[static_cast<std::size_t>(c)]).real();
    }
    for (Eigen::Index r = 0; r < npq; ++r) {
      const int i = p.pq[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < npvpq; ++c)
        j(npvpq + r, c) = jac.d_angle(i, p.pvpq[static_cast<std::size_t>(c)]).imag();
      for (Eigen::Index c = 0; c < npq; ++c)
        j(npvpq + r, npvpq + c) = jac.d_magnitude(i, p.pq[static_cast<std::size_t>(c)]).imag();
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    if (!lu.isInvertible()) return finish(network, ybus, v, demand, false, iter, worst, "singular Jacobian");
    const Eigen::VectorXd dx = lu.solve(-f);
    for (Eigen::Index c = 0; c < npvpq; ++c) va(p.pvpq[static_cast<std::size_t>(c)]) += dx(c);
    for (Eigen::Index c = 0; c < npq; ++c) vm(p.pq[static_cast<std::size_t>(c)]) += dx(npvpq + c);
    v = phasors();
    worst = partition_mismatch(p, bus_injections(ybus, v), spec, &f);
    if (!std::isfinite(worst) || worst > 1e10) return finish(network, ybus, v, demand, false, iter, worst, "diverged");
  }
  const bool ok = worst < options.tol;
  return finish(network, ybus, v, demand, ok, iter, worst, ok ? "converged" : "iteration limit reached");
}

Complex gauss_seidel_update(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v, Complex injection, int bus) {
  const Complex yii = ybus.y(bus, bus);
  if (yii == Complex(0.0, 0.0)) throw NumericalError("zero admittance diagonal at bus index " + std::to_string(bus));
  const Complex vi = v(bus);
  if (vi == Complex(0.0, 0.0)) throw NumericalError("zero voltage at bus index " + std::to_string(bus));
  Complex others(0.0, 0.0);
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (j != bus) others += ybus.y(bus, j) * v(j);
  return (std::conj(injection) / std::conj(vi) - others) / yii;
}

Complex gauss_seidel_update(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v, const DemandVector& demand,
                            int bus) {
  return gauss_seidel_update(ybus, v, Complex(-demand.pd(bus), -demand.qd(bus)), bus);
}

PFResult solve_gauss_seidel(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand,
                            const VoltageProfile& init, const GenSetpoints& dispatch,
                            const PowerFlowOptions& options) {
  const Partition p = partition(network);
  const Eigen::VectorXcd spec = specified_injection(network, demand, dispatch);
  Eigen::VectorXcd v = init.phasors();
  double worst = partition_mismatch(p, bus_injections(ybus, v), spec, nullptr);
  int iter = 0;
  while (worst >= options.tol && iter < options.max_iter) {
    ++iter;
    for (int i : p.pvpq) {
      Complex s = spec(i);
      const bool pv = network.is_generator_bus(i);
      if (pv) {
        const Complex current = ybus.y.row(i).transpose().cwiseProduct(v).sum();
        s = Complex(spec(i).real(), (v(i) * std::conj(current)).imag());
      }
      Complex next = gauss_seidel_update(ybus, v, s, i);
      if (pv) next *= init.vm(i) / std::abs(next);
      v(i) = next;
    }
    worst = partition_mismatch(p, bus_injections(ybus, v), spec, nullptr);
    if (!std::isfinite(worst)) return finish(network, ybus, v, demand, false, iter, worst, "diverged");
  }
  const bool ok = worst < options.tol;
  return finish(network, ybus, v, demand, ok, iter, worst, ok ? "converged" : "iteration limit reached");
}

std::vector<BranchFlow> branch_flows(const Network& network, const AdmittanceMatrix& ybus, const VoltageProfile& v) {
  const Eigen::VectorXcd vc = v.phasors();
  std::vector<BranchFlow> flows;
  flows.reserve(network.branches().size());
  for (std::size_t k = 0; k < network.branches().size(); ++k) {
    const Branch& br = network.branches()[k];
    const BranchStamp& st = ybus.stamps[k];
    const Complex vf = vc(br.from_bus);
    const Complex vt = vc(br.to_bus);
    BranchFlow f;
    f.from_end = std::abs(vf * std::conj(vf - vt) * std::conj(st.ft));
    f.to_end = std::abs(vt * std::conj(vt - vf) * std::conj(st.tf));
    f.pi_from = vf * std::conj(st.ff * vf + st.ft * vt);
    f.pi_to = vt * std::conj(st.tf * vf + st.tt * vt);
    f.violated = br.s_max > 0.0 && std::max(f.from_end, f.to_end) > br.s_max;
    flows.push_back(f);
  }
  return flows;
}

double generation_cost(const Network& network, const GenSetpoints& gen) {
  double total = 0.0;
  for (const Generator& g : network.generators()) {
    const double mw = gen.pg(g.bus) * network.base_mva();
    total += g.cost_c2 * mw * mw + g.cost_c1 * mw + g.cost_c0;
  }
  return total;
}

}  // namespace gridflow
