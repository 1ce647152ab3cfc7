#include <random>

#include <gtest/gtest.h>

#include "gridflow/derivatives.hpp"
#include "gridflow/powerflow.hpp"
#include "test_support.hpp"

using namespace gridflow;

namespace {

Eigen::VectorXcd random_phasors(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> m(0.9, 1.1), a(-0.4, 0.4);
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v(i) = std::polar(m(rng), a(rng));
  return v;
}

Eigen::VectorXcd perturb(const Eigen::VectorXcd& v, int k, bool angle, double h) {
  Eigen::VectorXcd out = v;
  const double m = std::abs(v(k)), a = std::arg(v(k));
  out(k) = angle ? std::polar(m, a + h) : std::polar(m + h, a);
  return out;
}

double weighted(const AdmittanceMatrix& y, const Eigen::VectorXcd& v, const Eigen::VectorXd& wp,
                const Eigen::VectorXd& wq) {
  const Eigen::VectorXcd s = bus_injections(y, v);
  return wp.dot(s.real()) + wq.dot(s.imag());
}

}  // namespace

TEST(Derivatives, InjectionJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  for (const Network& net : {gridflow::testing::three_bus(), gridflow::testing::load_bundled("case14")}) {
    const AdmittanceMatrix y = build_ybus(net);
    const Eigen::VectorXcd v = random_phasors(net.size(), rng);
    const InjectionJacobian j = injection_jacobian(y, v);
    const double h = 1e-6;
    for (int k = 0; k < net.size(); ++k) {
      for (bool angle : {true, false}) {
        const Eigen::VectorXcd fd =
            (bus_injections(y, perturb(v, k, angle, h)) - bus_injections(y, perturb(v, k, angle, -h))) / (2 * h);
        const Eigen::VectorXcd an = angle ? j.d_angle.col(k) : j.d_magnitude.col(k);
        EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-7) << net.name() << " bus " << k;
      }
    }
  }
}

TEST(Derivatives, WeightedGradientAndHessian) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const Network net = gridflow::testing::load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const int n = net.size();
  const Eigen::VectorXcd v = random_phasors(n, rng);
  Eigen::VectorXd wp(n), wq(n);
  for (int i = 0; i < n; ++i) {
    wp(i) = g(rng);
    wq(i) = g(rng);
  }
  const WeightedInjectionDerivatives d = weighted_injection_derivatives(y, v, wp, wq);
  ASSERT_EQ(d.gradient.size(), 2 * n);
  EXPECT_LT((d.hessian - d.hessian.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  const double h = 1e-6;
  for (int k = 0; k < 2 * n; ++k) {
    const bool angle = k < n;
    const int bus = angle ? k : k - n;
    const Eigen::VectorXcd vp = perturb(v, bus, angle, h), vm = perturb(v, bus, angle, -h);
    const double fd = (weighted(y, vp, wp, wq) - weighted(y, vm, wp, wq)) / (2 * h);
    EXPECT_NEAR(d.gradient(k), fd, 1e-7);
    const Eigen::VectorXd gfd = (weighted_injection_derivatives(y, vp, wp, wq, false).gradient -
                                 weighted_injection_derivatives(y, vm, wp, wq, false).gradient) /
                                (2 * h);
    EXPECT_LT((d.hessian.col(k) - gfd).cwiseAbs().maxCoeff(), 1e-6) << "column " << k;
  }
}

TEST(Derivatives, BatchedVjpMatchesWeightedGradient) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const Network net = gridflow::testing::load_bundled("case14");
  const AdmittanceMatrix y = build_ybus(net);
  const int n = net.size(), batch = 4;
  Eigen::MatrixXcd v(n, batch), c(n, batch);
  Eigen::MatrixXd vm(n, batch);
  for (int b = 0; b < batch; ++b) {
    v.col(b) = random_phasors(n, rng);
    for (int i = 0; i < n; ++i) c(i, b) = Complex(g(rng), g(rng));
  }
  vm = v.cwiseAbs();
  const Eigen::MatrixXcd current = y.y * v;
  Eigen::MatrixXd gva, gvm;
  injection_vjp(y.y, v, current, c, vm, gva, gvm);
  for (int b = 0; b < batch; ++b) {
    const WeightedInjectionDerivatives d =
        weighted_injection_derivatives(y, v.col(b), c.col(b).real(), c.col(b).imag(), false);
    EXPECT_LT((gva.col(b) - d.gradient.head(n)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((gvm.col(b) - d.gradient.tail(n)).cwiseAbs().maxCoeff(), 1e-12);
  }
}
