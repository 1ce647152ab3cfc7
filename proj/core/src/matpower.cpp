#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gridflow/error.hpp"
#include "gridflow/grid_model.hpp"

namespace gridflow {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Matrix {
  std::vector<std::vector<double>> rows;
  int line = 0;
  int column = 0;
};

// Reader for the MATPOWER case subset: `function` header, scalar and matrix assignments to
// `mpc.<field>`, `%` comments. Cell arrays and string values are skipped.
class CaseReader {
 public:
  explicit CaseReader(std::string_view text) : text_(text) {}

  void read() {
    while (true) {
      skip_space_and_comments();
      if (at_end()) break;
      const int line = line_, col = col_;
      std::string word = identifier();
      if (word.empty()) fail("unexpected character '" + std::string(1, peek()) + "'", line, col);
      if (word == "function") {
        read_function_header();
        continue;
      }
      if (word != "mpc") fail("expected 'mpc.<field>' assignment, found '" + word + "'", line, col);
      expect('.');
      const std::string field = identifier();
      if (field.empty()) fail("expected field name after 'mpc.'", line_, col_);
      skip_space_and_comments();
      expect('=');
      skip_space_and_comments();
      const char c = peek();
      if (c == '[') {
        matrices_[field] = matrix();
      } else if (c == '{') {
        skip_block('{', '}');
      } else if (c == '\'' || c == '"') {
        skip_string();
      } else {
        scalars_[field] = number();
      }
      skip_inline_space();
      if (peek() == ';') advance();
    }
  }

  const std::string& function_name() const { return function_name_; }
  std::optional<double> scalar(const std::string& f) const {
    auto it = scalars_.find(f);
    if (it == scalars_.end()) return std::nullopt;
    return it->second;
  }
  const Matrix* matrix_field(const std::string& f) const {
    auto it = matrices_.find(f);
    return it == matrices_.end() ? nullptr : &it->second;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, int line, int col) const { throw ParseError(msg, line, col); }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void advance() {
    if (at_end()) return;
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void expect(char c) {
    if (peek() != c) {
      fail(std::string("expected '") + c + "'" + (at_end() ? " before end of input" : ""), line_, col_);
    }
    advance();
  }

  void skip_comment() {
    while (!at_end() && peek() != '\n') advance();
  }
  void skip_space_and_comments() {
    while (!at_end()) {
      const char c = peek();
      if (c == '%') {
        skip_comment();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }
  void skip_inline_space() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }

  std::string identifier() {
    std::string out;
    if (!std::isalpha(static_cast<unsigned char>(peek())) && peek() != '_') return out;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) {
      out.push_back(peek());
      advance();
    }
    return out;
  }

  void read_function_header() {
    // function mpc = name
    skip_inline_space();
    identifier();
    skip_inline_space();
    if (peek() == '=') {
      advance();
      skip_inline_space();
      function_name_ = identifier();
    }
    skip_comment();
  }

  void skip_block(char open, char close) {
    const int line = line_, col = col_;
    int depth = 0;
    while (!at_end()) {
      const char c = peek();
      if (c == '\'' || c == '"') {
        skip_string();
        continue;
      }
      if (c == '%') {
        skip_comment();
        continue;
      }
      advance();
      if (c == open) ++depth;
      if (c == close && --depth == 0) return;
    }
    fail(std::string("unterminated '") + open + "'", line, col);
  }

  void skip_string() {
    const int line = line_, col = col_;
    const char quote = peek();
    advance();
    while (!at_end() && peek() != quote && peek() != '\n') advance();
    if (peek() != quote) fail("unterminated string", line, col);
    advance();
  }

  double number() {
    const int line = line_, col = col_;
    std::string tok;
    if (peek() == '+' || peek() == '-') {
      tok.push_back(peek());
      advance();
    }
    if (std::isalpha(static_cast<unsigned char>(peek()))) {
      const std::string word = identifier();
      if (word == "Inf" || word == "inf") return tok == "-" ? -HUGE_VAL : HUGE_VAL;
      fail("expected a number, found '" + word + "'", line, col);
    }
    while (!at_end()) {
      const char c = peek();
      const bool exp_sign = (c == '+' || c == '-') && !tok.empty() && (tok.back() == 'e' || tok.back() == 'E');
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || exp_sign) {
        tok.push_back(c);
        advance();
      } else {
        break;
      }
    }
    if (tok.empty() || tok == "+" || tok == "-") fail("expected a number", line, col);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      fail("malformed number '" + tok + "'", line, col);
    }
    if (used != tok.size()) fail("malformed number '" + tok + "'", line, col);
    return v;
  }

  Matrix matrix() {
    Matrix m;
    m.line = line_;
    m.column = col_;
    expect('[');
    std::vector<double> row;
    auto end_row = [&] {
      if (!row.empty()) {
        if (!m.rows.empty() && m.rows.front().size() != row.size())
          fail("row has " + std::to_string(row.size()) + " values, expected " +
                   std::to_string(m.rows.front().size()),
               line_, col_);
        m.rows.push_back(std::move(row));
        row.clear();
      }
    };
    while (true) {
      if (at_end()) fail("unterminated matrix", m.line, m.column);
      const char c = peek();
      if (c == ']') {
        end_row();
        advance();
        return m;
      }
      if (c == ';' || c == '\n') {
        end_row();
        advance();
      } else if (c == '%') {
        skip_comment();
      } else if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '.' && pos_ + 2 < text_.size() && text_.substr(pos_, 3) == "...") {
        // line continuation
        skip_comment();
        advance();
      } else {
        row.push_back(number());
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::string function_name_;
  std::map<std::string, double> scalars_;
  std::map<std::string, Matrix> matrices_;
};

const Matrix& require(const CaseReader& r, const std::string& field, std::size_t min_cols) {
  const Matrix* m = r.matrix_field(field);
  if (m == nullptr) throw ValidationError("missing table mpc." + field);
  if (m->rows.empty()) throw ValidationError("table mpc." + field + " is empty");
  if (m->rows.front().size() < min_cols)
    throw ParseError("mpc." + field + " needs at least " + std::to_string(min_cols) + " columns", m->line,
                     m->column);
  return *m;
}

struct GenUnit {
  int bus;
  double pg, qg, qmax, qmin, vg, pmax, pmin;
  double c2 = 0.0, c1 = 0.0, c0 = 0.0;
};

}  // namespace

Network parse_case(std::string_view text, std::string name) {
  CaseReader reader(text);
  reader.read();
  if (!reader.function_name().empty()) name = reader.function_name();

  const auto base = reader.scalar("baseMVA");
  if (!base) throw ValidationError("missing mpc.baseMVA");
  const double base_mva = *base;
  if (!(base_mva > 0.0)) throw ValidationError("mpc.baseMVA must be positive");

  const Matrix& bus_tab = require(reader, "bus", 13);
  const Matrix& gen_tab = require(reader, "gen", 10);
  const Matrix& br_tab = require(reader, "branch", 11);
  const Matrix* cost_tab = reader.matrix_field("gencost");

  std::vector<Bus> buses;
  std::map<int, int> index;
  int reference_count = 0;
  for (std::size_t k = 0; k < bus_tab.rows.size(); ++k) {
    const auto& r = bus_tab.rows[k];
    const double id_value = r[0];
    if (id_value != std::floor(id_value)) throw ValidationError("bus number must be an integer");
    const int ext = static_cast<int>(id_value);
    if (index.count(ext) != 0) throw ValidationError("duplicate bus id " + std::to_string(ext));
    const int type = static_cast<int>(r[1]);
    if (type < 1 || type > 3)
      throw ValidationError("bus " + std::to_string(ext) + ": unsupported bus type " + std::to_string(type));
    Bus b;
    b.id = static_cast<int>(k);
    b.external_id = ext;
    b.kind = type == 3 ? BusKind::reference : BusKind::load;
    reference_count += type == 3 ? 1 : 0;
    b.p_demand_nominal = r[2] / base_mva;
    b.q_demand_nominal = r[3] / base_mva;
    b.shunt_g = r[4] / base_mva;
    b.shunt_b = r[5] / base_mva;
    b.vm_case = r[7];
    b.va_case = r[8] * kDegToRad;
    b.base_kv = r[9];
    b.v_max = r[11];
    b.v_min = r[12];
    index[ext] = b.id;
    buses.push_back(b);
  }
  if (reference_count == 0) throw ValidationError("missing reference bus");
  if (reference_count > 1) throw ValidationError("more than one reference bus");
  auto lookup = [&](double ext, const char* what) {
    auto it = index.find(static_cast<int>(ext));
    if (it == index.end())
      throw ValidationError(std::string(what) + " references unknown bus " + std::to_string(static_cast<int>(ext)));
    return it->second;
  };

  if (const Matrix* ang = reader.matrix_field("gridflow_angle_limits")) {
    for (const auto& r : ang->rows) {
      if (r.size() < 3) throw ParseError("gridflow_angle_limits needs 3 columns", ang->line, ang->column);
      Bus& b = buses[static_cast<std::size_t>(lookup(r[0], "angle limit"))];
      b.ang_min = r[1] * kDegToRad;
      b.ang_max = r[2] * kDegToRad;
    }
  }

  if (cost_tab != nullptr && cost_tab->rows.size() < gen_tab.rows.size())
    throw ValidationError("mpc.gencost has fewer rows than mpc.gen");

  std::vector<GenUnit> units;
  for (std::size_t k = 0; k < gen_tab.rows.size(); ++k) {
    const auto& r = gen_tab.rows[k];
    GenUnit u{lookup(r[0], "generator"), r[1] / base_mva, r[2] / base_mva, r[3] / base_mva, r[4] / base_mva,
              r[5],                      r[8] / base_mva, r[9] / base_mva};
    if (cost_tab != nullptr) {
      const auto& c = cost_tab->rows[k];
      if (c.size() < 4) throw ParseError("mpc.gencost needs at least 4 columns", cost_tab->line, cost_tab->column);
      const int model = static_cast<int>(c[0]);
      if (model != 2) throw ValidationError("unsupported cost model " + std::to_string(model) + " (only polynomial)");
      const int ncoef = static_cast<int>(c[3]);
      if (ncoef < 0 || ncoef > 3) throw ValidationError("unsupported polynomial cost of degree " + std::to_string(ncoef - 1));
      if (c.size() < static_cast<std::size_t>(4 + ncoef))
        throw ParseError("mpc.gencost row is missing coefficients", cost_tab->line, cost_tab->column);
      double coef[3] = {0.0, 0.0, 0.0};  // c0, c1, c2
      for (int q = 0; q < ncoef; ++q) coef[ncoef - 1 - q] = c[static_cast<std::size_t>(4 + q)];
      u.c0 = coef[0];
      u.c1 = coef[1];
      u.c2 = coef[2];
    }
    if (r[7] > 0.0) units.push_back(u);
  }

  // Aggregate units per bus: bounds add, dispatch splits in proportion to p_max.
  std::map<int, std::vector<GenUnit>> by_bus;
  for (const GenUnit& u : units) by_bus[u.bus].push_back(u);
  std::vector<Generator> gens;
  for (const auto& [bus, list] : by_bus) {
    Generator g;
    g.bus = bus;
    g.v_setpoint = list.front().vg;
    double pmax_total = 0.0;
    for (const GenUnit& u : list) pmax_total += u.pmax;
    for (const GenUnit& u : list) {
      const double w = pmax_total > 0.0 ? u.pmax / pmax_total : 1.0 / static_cast<double>(list.size());
      g.p_min += u.pmin;
      g.p_max += u.pmax;
      g.q_min += u.qmin;
      g.q_max += u.qmax;
      g.p_setpoint += u.pg;
      g.q_setpoint += u.qg;
      g.cost_c2 += u.c2 * w * w;
      g.cost_c1 += u.c1 * w;
      g.cost_c0 += u.c0;
    }
    gens.push_back(g);
  }

  std::vector<Branch> branches;
  for (const auto& r : br_tab.rows) {
    if (r[10] <= 0.0) continue;
    Branch br;
    br.from_bus = lookup(r[0], "branch");
    br.to_bus = lookup(r[1], "branch");
    br.r = r[2];
    br.x = r[3];
    br.b_charging = r[4];
    br.s_max = r[5] / base_mva;
    br.tap = r[8] == 0.0 ? 1.0 : r[8];
    br.shift = r[9] * kDegToRad;
    branches.push_back(br);
  }

  return Network::create(std::move(name), base_mva, std::move(buses), std::move(gens), std::move(branches));
}

}  // namespace gridflow
