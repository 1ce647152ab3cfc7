#include "gridflow/refsolver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "gridflow/derivatives.hpp"
#include "gridflow/error.hpp"
#include "gridflow/powerflow.hpp"

namespace gridflow {

void SolverConfig::validate() const {
  if (!(feas_tol > 0.0) || !(opt_tol > 0.0)) throw std::invalid_argument("solver tolerances must be positive");
  if (max_outer < 1 || max_inner < 1) throw std::invalid_argument("solver iteration budgets must be positive");
  if (!(penalty_init > 0.0)) throw std::invalid_argument("penalty_init must be positive");
  if (!(penalty_growth > 1.0)) throw std::invalid_argument("penalty_growth must exceed 1");
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged:
      return "converged";
    case SolveStatus::iteration_limit:
      return "iteration_limit";
    case SolveStatus::numerical_failure:
      return "numerical_failure";
  }
  return "numerical_failure";
}

namespace {

// Decision vector x = [va (n), vm (n), pg (ng), qg (ng)], generators in generator_buses() order.
class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand)
      : net_(network), ybus_(ybus), demand_(demand), n_(network.size()),
        ng_(static_cast<int>(network.generator_buses().size())) {
    const int nx = 2 * n_ + 2 * ng_;
    lo_.resize(nx);
    hi_.resize(nx);
    for (const Bus& b : net_.buses()) {
      lo_(b.id) = b.ang_min;
      hi_(b.id) = b.ang_max;
      lo_(n_ + b.id) = b.v_min;
      hi_(n_ + b.id) = b.v_max;
    }
    const int ref = net_.reference_bus();
    const double ref_angle = std::clamp(net_.bus(ref).va_case, lo_(ref), hi_(ref));
    lo_(ref) = hi_(ref) = ref_angle;
    double slope = 0.0;
    for (int k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators()[static_cast<std::size_t>(k)];
      lo_(2 * n_ + k) = g.p_min;
      hi_(2 * n_ + k) = g.p_max;
      lo_(2 * n_ + ng_ + k) = g.q_min;
      hi_(2 * n_ + ng_ + k) = g.q_max;
      const double base = net_.base_mva();
      slope = std::max(slope, std::abs(2.0 * g.cost_c2 * base * std::max(std::abs(g.p_max), std::abs(g.p_min)) +
                                       g.cost_c1) * base);
    }
    cost_scale_ = slope > 0.0 ? slope : 1.0;
  }

  int size() const { return 2 * n_ + 2 * ng_; }
  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }
  Eigen::VectorXd project(const Eigen::VectorXd& x) const { return x.cwiseMax(lo_).cwiseMin(hi_); }

  Eigen::VectorXcd phasors(const Eigen::VectorXd& x) const {
    Eigen::VectorXcd v(n_);
    for (int i = 0; i < n_; ++i) v(i) = std::polar(x(n_ + i), x(i));
    return v;
  }

  // h = [P(V) - P_G + P_D; Q(V) - Q_G + Q_D]
  Eigen::VectorXd constraints(const Eigen::VectorXd& x) const {
    const Eigen::VectorXcd s = bus_injections(ybus_, phasors(x));
    Eigen::VectorXd h(2 * n_);
    for (int i = 0; i < n_; ++i) {
      h(i) = s(i).real() + demand_.pd(i);
      h(n_ + i) = s(i).imag() + demand_.qd(i);
    }
    for (int k = 0; k < ng_; ++k) {
      const int b = net_.generator_buses()[static_cast<std::size_t>(k)];
      h(b) -= x(2 * n_ + k);
      h(n_ + b) -= x(2 * n_ + ng_ + k);
    }
    return h;
  }

  double objective(const Eigen::VectorXd& x) const {
    double f = 0.0;
    const double base = net_.base_mva();
    for (int k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators()[static_cast<std::size_t>(k)];
      const double mw = x(2 * n_ + k) * base;
      f += g.cost_c2 * mw * mw + g.cost_c1 * mw + g.cost_c0;
    }
    return f / cost_scale_;
  }

  double value(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda, double mu) const {
    const Eigen::VectorXd h = constraints(x);
    return objective(x) + lambda.dot(h) + 0.5 * mu * h.squaredNorm();
  }

  // Gradient (and optionally Hessian) of the augmented Lagrangian.
  void derivatives(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda, double mu, Eigen::VectorXd& grad,
                   Eigen::MatrixXd* hess) const {
    const int nx = size();
    const Eigen::VectorXcd v = phasors(x);
    const Eigen::VectorXd h = constraints(x);
    const Eigen::VectorXd nu = lambda + mu * h;
    const WeightedInjectionDerivatives wd =
        weighted_injection_derivatives(ybus_, v, nu.head(n_), nu.tail(n_), hess != nullptr);
    grad = Eigen::VectorXd::Zero(nx);
    grad.head(2 * n_) = wd.gradient;
    const double base = net_.base_mva();
    for (int k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators()[static_cast<std::size_t>(k)];
      const int b = net_.generator_buses()[static_cast<std::size_t>(k)];
      grad(2 * n_ + k) = (2.0 * g.cost_c2 * x(2 * n_ + k) * base + g.cost_c1) * base / cost_scale_ - nu(b);
      grad(2 * n_ + ng_ + k) = -nu(n_ + b);
    }
    if (hess == nullptr) return;

    // J = dh/dx
    const InjectionJacobian jac = injection_jacobian(ybus_, v);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * n_, nx);
    j.block(0, 0, n_, n_) = jac.d_angle.real();
    j.block(0, n_, n_, n_) = jac.d_magnitude.real();
    j.block(n_, 0, n_, n_) = jac.d_angle.imag();
    j.block(n_, n_, n_, n_) = jac.d_magnitude.imag();
    for (int k = 0; k < ng_; ++k) {
      const int b = net_.generator_buses()[static_cast<std::size_t>(k)];
      j(b, 2 * n_ + k) = -1.0;
      j(n_ + b, 2 * n_ + ng_ + k) = -1.0;
    }
    hess->setZero(nx, nx);
    hess->selfadjointView<Eigen::Lower>().rankUpdate(j.transpose(), mu);
    *hess = hess->selfadjointView<Eigen::Lower>();
    hess->topLeftCorner(2 * n_, 2 * n_) += wd.hessian;
    for (int k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators()[static_cast<std::size_t>(k)];
      (*hess)(2 * n_ + k, 2 * n_ + k) += 2.0 * g.cost_c2 * base * base / cost_scale_;
    }
  }

  Eigen::VectorXd initial_point(const OpfSolution* warm) const {
    Eigen::VectorXd x(size());
    for (const Bus& b : net_.buses()) {
      x(b.id) = warm != nullptr ? warm->voltage.va(b.id) : 0.0;
      x(n_ + b.id) = warm != nullptr ? warm->voltage.vm(b.id) : 0.5 * (b.v_min + b.v_max);
    }
    for (int k = 0; k < ng_; ++k) {
      const Generator& g = net_.generators()[static_cast<std::size_t>(k)];
      x(2 * n_ + k) = warm != nullptr ? warm->gen.pg(g.bus) : 0.5 * (g.p_min + g.p_max);
      x(2 * n_ + ng_ + k) = warm != nullptr ? warm->gen.qg(g.bus) : 0.5 * (g.q_min + g.q_max);
    }
    return project(x);
  }

  OpfSolution to_solution(const Eigen::VectorXd& x) const {
    VoltageProfile vp{x.segment(n_, n_), x.head(n_)};
    GenSetpoints gen = GenSetpoints::zero(n_);
    for (int k = 0; k < ng_; ++k) {
      const int b = net_.generator_buses()[static_cast<std::size_t>(k)];
      gen.pg(b) = x(2 * n_ + k);
      gen.qg(b) = x(2 * n_ + ng_ + k);
    }
    return make_solution(net_, ybus_, std::move(vp), std::move(gen), demand_, SolutionSource::internal_solver);
  }

  // Mean and max complex mismatch magnitude over buses.
  std::pair<double, double> residual(const Eigen::VectorXd& h) const {
    double sum = 0.0, worst = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double m = std::hypot(h(i), h(n_ + i));
      sum += m;
      worst = std::max(worst, m);
    }
    return {sum / n_, worst};
  }

 private:
  const Network& net_;
  const AdmittanceMatrix& ybus_;
  const DemandVector& demand_;
  int n_;
  int ng_;
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  double cost_scale_ = 1.0;
};

double projected_gradient_norm(const AugmentedLagrangian& al, const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  return (x - al.project(x - g)).lpNorm<Eigen::Infinity>();
}

struct InnerResult {
  int iterations = 0;
  double projected_gradient = 0.0;
  bool numerical_failure = false;
};

// Projected Newton on the box: variables at a bound with the gradient pushing outward are
// held; the rest take a (regularised) Newton step, followed by a projected Armijo search.
InnerResult minimize_on_box(const AugmentedLagrangian& al, Eigen::VectorXd& x, const Eigen::VectorXd& lambda,
                            double mu, double tol, int max_iter) {
  InnerResult res;
  const int nx = al.size();
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  double f = al.value(x, lambda, mu);
  for (int it = 0; it < max_iter; ++it) {
    al.derivatives(x, lambda, mu, g, &h);
    const double pgn = projected_gradient_norm(al, x, g);
    res.projected_gradient = pgn;
    if (pgn <= tol) return res;
    ++res.iterations;

    const double eps = std::min(1e-8, pgn);
    std::vector<int> free;
    free.reserve(static_cast<std::size_t>(nx));
    for (int k = 0; k < nx; ++k) {
      const bool fixed = al.lower()(k) == al.upper()(k);
      const bool at_lo = x(k) - al.lower()(k) <= eps && g(k) > 0.0;
      const bool at_hi = al.upper()(k) - x(k) <= eps && g(k) < 0.0;
      if (!(fixed || at_lo || at_hi)) free.push_back(k);
    }
    Eigen::VectorXd d = Eigen::VectorXd::Zero(nx);
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = g(free[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nf; ++b)
          hff(a, b) = h(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
      }
      const double scale = std::max(1.0, hff.diagonal().cwiseAbs().maxCoeff());
      double shift = 0.0;
      Eigen::LLT<Eigen::MatrixXd> llt;
      for (int attempt = 0; attempt < 40; ++attempt) {
        Eigen::MatrixXd m = hff;
        m.diagonal().array() += shift;
        llt.compute(m);
        if (llt.info() == Eigen::Success) break;
        shift = shift == 0.0 ? 1e-10 * scale : shift * 10.0;
      }
      if (llt.info() != Eigen::Success) {
        res.numerical_failure = true;
        return res;
      }
      const Eigen::VectorXd df = llt.solve(-gf);
      for (Eigen::Index a = 0; a < nf; ++a) d(free[static_cast<std::size_t>(a)]) = df(a);
    }

    // Projected Armijo search; fall back to the projected gradient direction if the Newton
    // direction makes no progress.
    bool accepted = false;
    for (int pass = 0; pass < 2 && !accepted; ++pass) {
      const Eigen::VectorXd dir = pass == 0 ? d : Eigen::VectorXd(-g / std::max(1.0, h.diagonal().cwiseAbs().maxCoeff()));
      double alpha = 1.0;
      for (int ls = 0; ls < 40; ++ls) {
        const Eigen::VectorXd xn = al.project(x + alpha * dir);
        const double fn = al.value(xn, lambda, mu);
        if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(xn - x)) {
          accepted = (xn - x).lpNorm<Eigen::Infinity>() > 0.0 || fn < f;
          x = xn;
          f = fn;
          break;
        }
        alpha *= 0.5;
      }
    }
    if (!accepted) return res;  // stalled at working precision
  }
  al.derivatives(x, lambda, mu, g, nullptr);
  res.projected_gradient = projected_gradient_norm(al, x, g);
  return res;
}

}  // namespace

AcopfResult solve_acopf(const Network& network, const AdmittanceMatrix& ybus, const DemandVector& demand,
                        const SolverConfig& config, const OpfSolution* warm_start) {
  config.validate();
  if (demand.size() != network.size()) throw SchemaError("demand does not match the network dimension");
  const AugmentedLagrangian al(network, ybus, demand);
  Eigen::VectorXd x = al.initial_point(warm_start);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(2 * network.size());
  double mu = config.penalty_init;
  double omega = 1.0 / mu;                 // subproblem tolerance
  double eta = 1.0 / std::pow(mu, 0.1);    // constraint-decrease target
  const double omega_floor = 0.1 * config.opt_tol;
  constexpr double kMaxPenalty = 1e12;

  AcopfResult result;
  SolveDiagnostics& diag = result.diagnostics;
  for (int outer = 0; outer < config.max_outer; ++outer) {
    diag.outer_iterations = outer + 1;
    const InnerResult inner = minimize_on_box(al, x, lambda, mu, std::max(omega, omega_floor), config.max_inner);
    diag.inner_iterations += inner.iterations;
    diag.projected_gradient = inner.projected_gradient;
    if (inner.numerical_failure || !x.allFinite()) {
      diag.status = SolveStatus::numerical_failure;
      break;
    }
    const Eigen::VectorXd h = al.constraints(x);
    const auto [mean_r, max_r] = al.residual(h);
    diag.mean_residual = mean_r;
    diag.max_residual = max_r;
    diag.penalty = mu;

    const double hn = h.lpNorm<Eigen::Infinity>();
    if (hn <= eta) {
      lambda += mu * h;
      // Projected gradient of the Lagrangian with the updated multipliers.
      Eigen::VectorXd g;
      al.derivatives(x, lambda, 0.0, g, nullptr);
      diag.projected_gradient = projected_gradient_norm(al, x, g);
      if (mean_r < config.feas_tol && diag.projected_gradient < config.opt_tol) {
        diag.status = SolveStatus::converged;
        break;
      }
      eta = std::max(eta / std::pow(mu, 0.9), 0.1 * config.feas_tol);
      omega = omega / mu;
    } else {
      mu = std::min(mu * config.penalty_growth, kMaxPenalty);
      eta = std::max(1.0 / std::pow(mu, 0.1), 0.1 * config.feas_tol);
      omega = 1.0 / mu;
    }
  }

  result.solution = al.to_solution(x);
  const std::vector<BranchFlow> flows = branch_flows(network, ybus, result.solution.voltage);
  diag.overloaded_branches =
      static_cast<int>(std::count_if(flows.begin(), flows.end(), [](const BranchFlow& f) { return f.violated; }));
  return result;
}

ImportResult import_labels(std::istream& in, const Network& network) {
  const std::vector<RawSampleRow> rows = read_samples_csv(in, network);
  if (rows.empty()) throw SchemaError("dataset file has no samples");
  const AdmittanceMatrix ybus = build_ybus(network);
  ImportResult out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const RawSampleRow& row = rows[k];
    const int row_no = static_cast<int>(k) + 1;
    if (!row.error.empty()) {
      out.rejected.push_back({row_no, row.sample.scenario_id, row.error});
      continue;
    }
    LabeledSample s = row.sample;
    const ResidualReport r = residual_check(network, ybus, s.solution.voltage, s.demand, s.solution.gen);
    s.solution.feasibility = {r.mean_abs, r.max_abs};
    s.solution.source = SolutionSource::imported;
    if (box_violation(network, s.solution) > 1e-6) {
      out.rejected.push_back({row_no, s.scenario_id, "bound violation"});
      continue;
    }
    if (!(r.mean_abs < 1e-4)) {
      out.rejected.push_back({row_no, s.scenario_id, "power balance residual " + std::to_string(r.mean_abs)});
      continue;
    }
    const double cost = generation_cost(network, s.solution.gen);
    if (!(std::abs(s.solution.objective - cost) <= 1e-9 * std::max(1.0, std::abs(cost)))) {
      out.rejected.push_back({row_no, s.scenario_id, "objective does not match generation cost"});
      continue;
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

ImportResult import_labels(const std::string& path, const Network& network) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("dataset file not found: " + path);
  return import_labels(in, network);
}

}  // namespace gridflow
