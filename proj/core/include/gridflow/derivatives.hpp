#pragma once

#include <Eigen/Dense>

#include "gridflow/grid_model.hpp"

namespace gridflow {

/// Partial derivatives of the bus injections S(V) in polar coordinates.
struct InjectionJacobian {
  Eigen::MatrixXcd d_angle;      ///< dS_i / d va_k
  Eigen::MatrixXcd d_magnitude;  ///< dS_i / d vm_k
};

InjectionJacobian injection_jacobian(const AdmittanceMatrix& ybus, const Eigen::VectorXcd& v);

/// Gradient and Hessian of F(vm, va) = sum_i (wp_i P_i + wq_i Q_i), ordered [va; vm].
struct WeightedInjectionDerivatives {
  Eigen::VectorXd gradient;  ///< size 2n
  Eigen::MatrixXd hessian;   ///< 2n x 2n, symmetric
};

WeightedInjectionDerivatives weighted_injection_derivatives(const AdmittanceMatrix& ybus,
                                                            const Eigen::VectorXcd& v,
                                                            const Eigen::VectorXd& wp,
                                                            const Eigen::VectorXd& wq,
                                                            bool with_hessian = true);

/// Vector-Jacobian product of the injections for a batch of profiles.
/// Columns of `v` are samples; `c = dL/dP + j dL/dQ` for each bus and sample.
/// Writes dL/d va and dL/d vm (n x batch).
void injection_vjp(const Eigen::MatrixXcd& ybus, const Eigen::MatrixXcd& v,
                   const Eigen::MatrixXcd& current, const Eigen::MatrixXcd& c,
                   const Eigen::MatrixXd& vm, Eigen::MatrixXd& grad_va, Eigen::MatrixXd& grad_vm);

}  // namespace gridflow
