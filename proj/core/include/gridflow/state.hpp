#pragma once

#include <complex>

#include <Eigen/Dense>

namespace gridflow {

using Complex = std::complex<double>;

/// Per-bus voltage magnitude (per-unit) and angle (radians).
struct VoltageProfile {
  Eigen::VectorXd vm;
  Eigen::VectorXd va;

  int size() const noexcept { return static_cast<int>(vm.size()); }
  Eigen::VectorXcd phasors() const;
  static VoltageProfile from_phasors(const Eigen::VectorXcd& v);
  static VoltageProfile flat(int n);
};

/// Per-bus demand, positive when consumed.
struct DemandVector {
  Eigen::VectorXd pd;
  Eigen::VectorXd qd;

  int size() const noexcept { return static_cast<int>(pd.size()); }
  static DemandVector zero(int n);
};

/// Generator dispatch indexed by bus, identically zero on load buses.
struct GenSetpoints {
  Eigen::VectorXd pg;
  Eigen::VectorXd qg;

  int size() const noexcept { return static_cast<int>(pg.size()); }
  static GenSetpoints zero(int n);
};

}  // namespace gridflow
