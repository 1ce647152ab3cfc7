#include "gridflow/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridflow/error.hpp"

namespace gridflow {

using nlohmann::json;

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::load:
      return "load";
    case BusKind::generator:
      return "generator";
    case BusKind::reference:
      return "reference";
  }
  return "load";
}

namespace {

BusKind bus_kind_from_string(const std::string& s) {
  if (s == "load") return BusKind::load;
  if (s == "generator") return BusKind::generator;
  if (s == "reference") return BusKind::reference;
  throw SchemaError("unknown bus kind '" + s + "'");
}

bool finite_all(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string bus_label(const Bus& b) { return "bus " + std::to_string(b.external_id); }

}  // namespace

Eigen::VectorXcd VoltageProfile::phasors() const {
  Eigen::VectorXcd v(vm.size());
  for (Eigen::Index i = 0; i < vm.size(); ++i) v(i) = std::polar(vm(i), va(i));
  return v;
}

VoltageProfile VoltageProfile::from_phasors(const Eigen::VectorXcd& v) {
  VoltageProfile p{Eigen::VectorXd(v.size()), Eigen::VectorXd(v.size())};
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    p.vm(i) = std::abs(v(i));
    p.va(i) = std::arg(v(i));
  }
  return p;
}

VoltageProfile VoltageProfile::flat(int n) {
  return {Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n)};
}

DemandVector DemandVector::zero(int n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)}; }

GenSetpoints GenSetpoints::zero(int n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)}; }

Network Network::create(std::string name, double base_mva, std::vector<Bus> buses,
                        std::vector<Generator> generators, std::vector<Branch> branches) {
  if (!(base_mva > 0.0) || !std::isfinite(base_mva)) throw ValidationError("base_mva must be positive");
  const int n = static_cast<int>(buses.size());
  if (n < 2) throw ValidationError("a network needs at least 2 buses");

  std::set<int> external;
  int reference = -1;
  for (int i = 0; i < n; ++i) {
    Bus& b = buses[static_cast<std::size_t>(i)];
    if (b.id != i) throw ValidationError("bus ids must be contiguous and ordered");
    if (!external.insert(b.external_id).second)
      throw ValidationError("duplicate bus id " + std::to_string(b.external_id));
    if (!finite_all({b.p_demand_nominal, b.q_demand_nominal, b.v_min, b.v_max, b.ang_min, b.ang_max,
                     b.shunt_g, b.shunt_b, b.base_kv, b.vm_case, b.va_case}))
      throw ValidationError(bus_label(b) + ": non-finite value");
    if (!(b.v_min > 0.0)) throw ValidationError(bus_label(b) + ": v_min must be positive");
    if (b.v_min > b.v_max) throw ValidationError(bus_label(b) + ": v_min exceeds v_max");
    if (b.ang_min > b.ang_max) throw ValidationError(bus_label(b) + ": ang_min exceeds ang_max");
    if (b.kind == BusKind::reference) {
      if (reference >= 0) throw ValidationError("more than one reference bus");
      reference = i;
    }
  }
  if (reference < 0) throw ValidationError("missing reference bus");

  std::vector<int> slot(static_cast<std::size_t>(n), -1);
  for (const Generator& g : generators) {
    if (g.bus < 0 || g.bus >= n) throw ValidationError("generator references unknown bus " + std::to_string(g.bus));
    const Bus& b = buses[static_cast<std::size_t>(g.bus)];
    if (!finite_all({g.p_min, g.p_max, g.q_min, g.q_max, g.cost_c2, g.cost_c1, g.cost_c0, g.p_setpoint,
                     g.q_setpoint, g.v_setpoint}))
      throw ValidationError("generator at " + bus_label(b) + ": non-finite value");
    if (g.p_min > g.p_max) throw ValidationError("generator at " + bus_label(b) + ": p_min exceeds p_max");
    if (g.q_min > g.q_max) throw ValidationError("generator at " + bus_label(b) + ": q_min exceeds q_max");
    if (g.cost_c2 < 0.0) throw ValidationError("generator at " + bus_label(b) + ": negative quadratic cost");
    if (slot[static_cast<std::size_t>(g.bus)] >= 0)
      throw ValidationError("more than one generator at " + bus_label(b));
    slot[static_cast<std::size_t>(g.bus)] = 0;
  }
  if (slot[static_cast<std::size_t>(reference)] < 0)
    throw ValidationError("reference " + bus_label(buses[static_cast<std::size_t>(reference)]) +
                          " hosts no generator");

  for (const Branch& br : branches) {
    if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
      throw ValidationError("branch references unknown bus");
    if (br.from_bus == br.to_bus) throw ValidationError("branch connects a bus to itself");
    if (!finite_all({br.r, br.x, br.b_charging, br.tap, br.shift, br.s_max}))
      throw ValidationError("branch: non-finite value");
    if (br.r == 0.0 && br.x == 0.0) throw ValidationError("branch has zero impedance");
    if (!(br.tap > 0.0)) throw ValidationError("branch tap ratio must be positive");
    if (br.s_max < 0.0) throw ValidationError("branch rating must be non-negative");
  }

  std::sort(generators.begin(), generators.end(),
            [](const Generator& a, const Generator& b) { return a.bus < b.bus; });

  Network net;
  net.name_ = std::move(name);
  net.base_mva_ = base_mva;
  net.reference_bus_ = reference;
  net.generator_slot_.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t k = 0; k < generators.size(); ++k) {
    net.generator_slot_[static_cast<std::size_t>(generators[k].bus)] = static_cast<int>(k);
    net.generator_buses_.push_back(generators[k].bus);
  }
  for (int i = 0; i < n; ++i) {
    Bus& b = buses[static_cast<std::size_t>(i)];
    if (i == reference)
      b.kind = BusKind::reference;
    else
      b.kind = net.generator_slot_[static_cast<std::size_t>(i)] >= 0 ? BusKind::generator : BusKind::load;
    if (b.kind == BusKind::load) net.load_buses_.push_back(i);
  }
  net.buses_ = std::move(buses);
  net.generators_ = std::move(generators);
  net.branches_ = std::move(branches);
  return net;
}

const Generator* Network::generator_at(int id) const {
  const int k = generator_slot(id);
  return k < 0 ? nullptr : &generators_[static_cast<std::size_t>(k)];
}

std::optional<int> Network::internal_id(int external_id) const {
  for (const Bus& b : buses_)
    if (b.external_id == external_id) return b.id;
  return std::nullopt;
}

AdmittanceMatrix build_ybus(const Network& network) {
  const int n = network.size();
  AdmittanceMatrix y{Eigen::MatrixXcd::Zero(n, n), {}};
  y.stamps.reserve(network.branches().size());
  const Complex j(0.0, 1.0);
  for (const Branch& br : network.branches()) {
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex charging = j * (br.b_charging / 2.0);
    const Complex tap = std::polar(br.tap, br.shift);
    BranchStamp s;
    s.ff = ys / (br.tap * br.tap) + charging;
    s.tt = ys + charging;
    s.ft = -ys / std::conj(tap);
    s.tf = -ys / tap;
    y.y(br.from_bus, br.from_bus) += s.ff;
    y.y(br.to_bus, br.to_bus) += s.tt;
    y.y(br.from_bus, br.to_bus) += s.ft;
    y.y(br.to_bus, br.from_bus) += s.tf;
    y.stamps.push_back(s);
  }
  for (const Bus& b : network.buses()) y.y(b.id, b.id) += Complex(b.shunt_g, b.shunt_b);
  return y;
}

DemandVector nominal_demand(const Network& network) {
  DemandVector d = DemandVector::zero(network.size());
  for (const Bus& b : network.buses()) {
    d.pd(b.id) = b.p_demand_nominal;
    d.qd(b.id) = b.q_demand_nominal;
  }
  return d;
}

// JSON -------------------------------------------------------------------

std::string serialize_case(const Network& network) {
  json buses = json::array();
  for (const Bus& b : network.buses()) {
    buses.push_back({{"id", b.id},
                     {"external_id", b.external_id},
                     {"kind", std::string(to_string(b.kind))},
                     {"p_demand_nominal", b.p_demand_nominal},
                     {"q_demand_nominal", b.q_demand_nominal},
                     {"v_min", b.v_min},
                     {"v_max", b.v_max},
                     {"ang_min", b.ang_min},
                     {"ang_max", b.ang_max},
                     {"shunt_g", b.shunt_g},
                     {"shunt_b", b.shunt_b},
                     {"base_kv", b.base_kv},
                     {"vm_case", b.vm_case},
                     {"va_case", b.va_case}});
  }
  json gens = json::array();
  for (const Generator& g : network.generators()) {
    gens.push_back({{"bus", g.bus},
                    {"p_min", g.p_min},
                    {"p_max", g.p_max},
                    {"q_min", g.q_min},
                    {"q_max", g.q_max},
                    {"cost_c2", g.cost_c2},
                    {"cost_c1", g.cost_c1},
                    {"cost_c0", g.cost_c0},
                    {"p_setpoint", g.p_setpoint},
                    {"q_setpoint", g.q_setpoint},
                    {"v_setpoint", g.v_setpoint}});
  }
  json branches = json::array();
  for (const Branch& br : network.branches()) {
    branches.push_back({{"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_charging", br.b_charging},
                        {"tap", br.tap},
                        {"shift", br.shift},
                        {"s_max", br.s_max}});
  }
  json doc = {{"schema", "gridflow.case"},
              {"version", 1},
              {"name", network.name()},
              {"base_mva", network.base_mva()},
              {"buses", std::move(buses)},
              {"generators", std::move(gens)},
              {"branches", std::move(branches)}};
  return doc.dump(1) + "\n";
}

Network parse_case_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; map it to line/column.
    const std::size_t offset = std::min<std::size_t>(e.byte, text.size());
    int line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < offset; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(e.what(), line, col);
  }
  try {
    if (doc.value("schema", std::string{}) != "gridflow.case") throw SchemaError("not a gridflow case document");
    if (doc.at("version").get<int>() != 1) throw SchemaError("unsupported case schema version");
    std::vector<Bus> buses;
    for (const json& jb : doc.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      b.external_id = jb.at("external_id").get<int>();
      b.kind = bus_kind_from_string(jb.at("kind").get<std::string>());
      b.p_demand_nominal = jb.at("p_demand_nominal").get<double>();
      b.q_demand_nominal = jb.at("q_demand_nominal").get<double>();
      b.v_min = jb.at("v_min").get<double>();
      b.v_max = jb.at("v_max").get<double>();
      b.ang_min = jb.at("ang_min").get<double>();
      b.ang_max = jb.at("ang_max").get<double>();
      b.shunt_g = jb.at("shunt_g").get<double>();
      b.shunt_b = jb.at("shunt_b").get<double>();
      b.base_kv = jb.at("base_kv").get<double>();
      b.vm_case = jb.at("vm_case").get<double>();
      b.va_case = jb.at("va_case").get<double>();
      buses.push_back(b);
    }
    std::vector<Generator> gens;
    for (const json& jg : doc.at("generators")) {
      Generator g;
      g.bus = jg.at("bus").get<int>();
      g.p_min = jg.at("p_min").get<double>();
      g.p_max = jg.at("p_max").get<double>();
      g.q_min = jg.at("q_min").get<double>();
      g.q_max = jg.at("q_max").get<double>();
      g.cost_c2 = jg.at("cost_c2").get<double>();
      g.cost_c1 = jg.at("cost_c1").get<double>();
      g.cost_c0 = jg.at("cost_c0").get<double>();
      g.p_setpoint = jg.at("p_setpoint").get<double>();
      g.q_setpoint = jg.at("q_setpoint").get<double>();
      g.v_setpoint = jg.at("v_setpoint").get<double>();
      gens.push_back(g);
    }
    std::vector<Branch> branches;
    for (const json& jr : doc.at("branches")) {
      Branch br;
      br.from_bus = jr.at("from_bus").get<int>();
      br.to_bus = jr.at("to_bus").get<int>();
      br.r = jr.at("r").get<double>();
      br.x = jr.at("x").get<double>();
      br.b_charging = jr.at("b_charging").get<double>();
      br.tap = jr.at("tap").get<double>();
      br.shift = jr.at("shift").get<double>();
      br.s_max = jr.at("s_max").get<double>();
      branches.push_back(br);
    }
    return Network::create(doc.at("name").get<std::string>(), doc.at("base_mva").get<double>(),
                           std::move(buses), std::move(gens), std::move(branches));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("case JSON: ") + e.what());
  }
}

Network load_case(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("case file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::filesystem::path p(path);
  if (p.extension() == ".json") return parse_case_json(ss.str());
  return parse_case(ss.str(), p.stem().string());
}

std::string resolve_case_path(const std::string& spec) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(spec)) return spec;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("GRIDFLOW_CASES")) dirs.emplace_back(env);
#ifdef GRIDFLOW_DEFAULT_CASES_DIR
  dirs.emplace_back(GRIDFLOW_DEFAULT_CASES_DIR);
#endif
  dirs.emplace_back("cases");
  for (const fs::path& dir : dirs) {
    for (const char* ext : {"", ".m", ".json"}) {
      fs::path candidate = dir / (spec + ext);
      if (fs::is_regular_file(candidate)) return candidate.string();
    }
  }
  throw Error("case file not found: " + spec);
}

}  // namespace gridflow
