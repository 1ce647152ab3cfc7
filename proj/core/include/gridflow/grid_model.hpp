#pragma once

#include <complex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/state.hpp"

namespace gridflow {

enum class BusKind { load, generator, reference };

std::string_view to_string(BusKind kind);

/// Quantities are per-unit on the network MVA base; angles in radians.
struct Bus {
  int id = 0;           ///< contiguous internal index
  int external_id = 0;  ///< number used in the source file
  BusKind kind = BusKind::load;
  double p_demand_nominal = 0.0;
  double q_demand_nominal = 0.0;
  double v_min = 0.94;
  double v_max = 1.06;
  double ang_min = -1.5707963267948966;
  double ang_max = 1.5707963267948966;
  double shunt_g = 0.0;
  double shunt_b = 0.0;
  double base_kv = 0.0;
  // Voltage stored with the case (power-flow start point / published solution).
  double vm_case = 1.0;
  double va_case = 0.0;

  bool operator==(const Bus&) const = default;
};

/// One dispatchable unit per bus; source files with several units on a bus are aggregated.
/// Cost coefficients are in $/hr with dispatch expressed in MW.
struct Generator {
  int bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double cost_c2 = 0.0;
  double cost_c1 = 0.0;
  double cost_c0 = 0.0;
  // Operating point stored with the case, used for conventional power-flow baselines.
  double p_setpoint = 0.0;
  double q_setpoint = 0.0;
  double v_setpoint = 1.0;

  bool operator==(const Generator&) const = default;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap = 1.0;
  double shift = 0.0;  ///< radians
  double s_max = 0.0;  ///< per-unit MVA, 0 means unlimited

  bool operator==(const Branch&) const = default;
};

/// Validated, immutable grid description.
class Network {
 public:
  /// Validates every invariant and derives bus kinds from generator placement and the
  /// reference flag. Throws ValidationError.
  static Network create(std::string name, double base_mva, std::vector<Bus> buses,
                        std::vector<Generator> generators, std::vector<Branch> branches);

  const std::string& name() const noexcept { return name_; }
  double base_mva() const noexcept { return base_mva_; }
  int size() const noexcept { return static_cast<int>(buses_.size()); }

  const std::vector<Bus>& buses() const noexcept { return buses_; }
  const std::vector<Generator>& generators() const noexcept { return generators_; }
  const std::vector<Branch>& branches() const noexcept { return branches_; }
  const Bus& bus(int id) const { return buses_.at(static_cast<std::size_t>(id)); }

  int reference_bus() const noexcept { return reference_bus_; }
  /// Ascending internal ids of buses hosting a generator (reference bus included).
  const std::vector<int>& generator_buses() const noexcept { return generator_buses_; }
  /// Ascending internal ids of buses without generation.
  const std::vector<int>& load_buses() const noexcept { return load_buses_; }
  bool is_generator_bus(int id) const { return generator_slot_.at(static_cast<std::size_t>(id)) >= 0; }
  /// Generator hosted at a bus, nullptr for load buses.
  const Generator* generator_at(int id) const;
  /// Position of a bus in generator_buses(), -1 for load buses.
  int generator_slot(int id) const { return generator_slot_.at(static_cast<std::size_t>(id)); }
  /// Internal index for a source-file bus number, nullopt if unknown.
  std::optional<int> internal_id(int external_id) const;

  bool operator==(const Network& other) const {
    return name_ == other.name_ && base_mva_ == other.base_mva_ && buses_ == other.buses_ &&
           generators_ == other.generators_ && branches_ == other.branches_;
  }

 private:
  Network() = default;

  std::string name_;
  double base_mva_ = 100.0;
  std::vector<Bus> buses_;
  std::vector<Generator> generators_;
  std::vector<Branch> branches_;
  int reference_bus_ = 0;
  std::vector<int> generator_buses_;
  std::vector<int> load_buses_;
  std::vector<int> generator_slot_;
};

/// Pi-model stamp of a single branch: [from-from, from-to, to-from, to-to].
struct BranchStamp {
  Complex ff, ft, tf, tt;
};

/// Dense nodal admittance matrix with per-branch provenance.
struct AdmittanceMatrix {
  Eigen::MatrixXcd y;
  std::vector<BranchStamp> stamps;  ///< same order as Network::branches()

  int size() const noexcept { return static_cast<int>(y.rows()); }
  Complex operator()(int i, int j) const { return y(i, j); }
};

AdmittanceMatrix build_ybus(const Network& network);

/// Per-bus demand exactly as stored in the case.
DemandVector nominal_demand(const Network& network);

// Case I/O ---------------------------------------------------------------

/// Parses the supported MATPOWER subset (baseMVA, bus, gen, branch, gencost tables and the
/// optional gridflow_angle_limits extension). Numbers are converted to per-unit.
Network parse_case(std::string_view text, std::string name = "case");

/// Parses the native JSON case schema emitted by serialize_case.
Network parse_case_json(std::string_view text);

/// Native JSON representation, per-unit and radians, one-to-one with Network.
std::string serialize_case(const Network& network);

/// Reads a case from disk; `.json` files use the native schema, anything else MATPOWER.
Network load_case(const std::string& path);

/// Resolves a case argument: an existing path, or a bundled case name such as "case14".
/// Throws Error when nothing matches.
std::string resolve_case_path(const std::string& spec);

}  // namespace gridflow
