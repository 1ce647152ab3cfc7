#include "gridflow/derivatives.hpp"

namespace gridflow {

InjectionJacobian injection_jacobian(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v) {
  const Eigen::Index n = v.size();
  const Eigen::MatrixXcd& y = ybus.y;
  const Eigen::VectorXcd current = y * v;
  const Complex j(0.0, 1.0);
  InjectionJacobian jac{Eigen::MatrixXcd(n, n), Eigen::MatrixXcd(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Complex unit = v(k) / std::abs(v(k));
    for (Eigen::Index i = 0; i < n; ++i) {
      jac.d_magnitude(i, k) = v(i) * std::conj(y(i, k) * unit);
      jac.d_angle(i, k) = -j * v(i) * std::conj(y(i, k) * v(k));
    }
    jac.d_magnitude(k, k) += std::conj(current(k)) * unit;
    jac.d_angle(k, k) += j * v(k) * std::conj(current(k));
  }
  return jac;
}

WeightedInjectionDerivatives weighted_injection_derivatives(const AdmittanceMatrix& ybus,
                                                            const Eigen::VectorXcd& v,
                                                            const Eigen::VectorXd& wp,
                                                            const Eigen::VectorXd& wq, bool with_hessian) {
  const Eigen::Index n = v.size();
  // T_ij = conj(c_i) V_i conj(Y_ij V_j) so that F = sum_ij Re T_ij.
  Eigen::MatrixXcd t(n, n);
  for (Eigen::Index jcol = 0; jcol < n; ++jcol)
    for (Eigen::Index i = 0; i < n; ++i)
      t(i, jcol) = Complex(wp(i), -wq(i)) * v(i) * std::conj(ybus.y(i, jcol) * v(jcol));
  const Eigen::MatrixXd re = t.real();
  const Eigen::MatrixXd im = t.imag();
  const Eigen::VectorXd row_re = re.rowwise().sum();
  const Eigen::VectorXd col_re = re.colwise().sum().transpose();
  const Eigen::VectorXd row_im = im.rowwise().sum();
  const Eigen::VectorXd col_im = im.colwise().sum().transpose();
  Eigen::VectorXd vm(n);
  for (Eigen::Index i = 0; i < n; ++i) vm(i) = std::abs(v(i));

  WeightedInjectionDerivatives out;
  out.gradient.resize(2 * n);
  out.gradient.head(n) = col_im - row_im;
  out.gradient.tail(n) = (row_re + col_re).cwiseQuotient(vm);
  if (!with_hessian) return out;

  out.hessian.resize(2 * n, 2 * n);
  auto haa = out.hessian.topLeftCorner(n, n);
  auto hav = out.hessian.topRightCorner(n, n);
  auto hvv = out.hessian.bottomRightCorner(n, n);
  haa = re + re.transpose();
  haa.diagonal() -= row_re + col_re;
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index k = 0; k < n; ++k) {
      hav(k, l) = (im(l, k) - im(k, l)) / vm(l);
      hvv(k, l) = (re(k, l) + re(l, k)) / (vm(k) * vm(l));
    }
    hav(l, l) -= (row_im(l) - col_im(l)) / vm(l);
  }
  out.hessian.bottomLeftCorner(n, n) = hav.transpose();
  return out;
}

void injection_vjp(const Eigen::MatrixXcd& ybus, const Eigen::MatrixXcd& v, const Eigen::MatrixXcd& current,
                   const Eigen::MatrixXcd& c, const Eigen::MatrixXd& vm, Eigen::MatrixXd& grad_va,
                   Eigen::MatrixXd& grad_vm) {
  // dL = Re sum_j w_j dV_j with w = conj(c .* I) + Y^T (c .* conj(V)).
  const Eigen::MatrixXcd w = (c.cwiseProduct(current)).conjugate() + ybus.transpose() * c.cwiseProduct(v.conjugate());
  const Eigen::MatrixXcd wv = w.cwiseProduct(v);
  grad_va = -wv.imag();
  grad_vm = wv.real().cwiseQuotient(vm);
}

}  // namespace gridflow
