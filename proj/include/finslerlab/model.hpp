#pragma once

// Model definitions: parsing of .fmod files and tangent samples.
//
// File format, one statement per line, '#' starts a comment:
//
//   name = <identifier>
//   dim = <integer >= 2>
//   param <id> = <real>          (any number, before or after use)
//   F = <expr>
//   phi1 = <expr> ... phin = <expr>   (x variables only)
//   domain = <expr>              (zero or more; each must be > 0)

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/expr.hpp"

namespace finslerlab {

struct ModelDef {
  std::string name;
  int dim = 0;
  Ast F;
  std::vector<Ast> phi;
  std::vector<Ast> domain;
  std::vector<std::string> param_names;
  std::vector<double> param_values;

  std::size_t n() const { return static_cast<std::size_t>(dim); }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

struct Statement {
  int line;
  std::string key;
  std::string rhs;
  int rhs_column;  // 0-based column where rhs starts
};

}  // namespace detail

inline ModelDef parse_model(std::string_view source) {
  std::vector<detail::Statement> statements;
  {
    std::size_t start = 0;
    int line = 0;
    while (start <= source.size()) {
      std::size_t end = source.find('\n', start);
      if (end == std::string_view::npos) end = source.size();
      ++line;
      std::string_view raw = source.substr(start, end - start);
      if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
      if (!detail::trim(raw).empty()) {
        const auto eq = raw.find('=');
        if (eq == std::string_view::npos) {
          std::size_t col = 0;
          while (col < raw.size() && std::isspace(static_cast<unsigned char>(raw[col]))) ++col;
          throw SyntaxError(line, static_cast<int>(col) + 1, "expected '<key> = <value>'");
        }
        std::size_t rc = eq + 1;
        while (rc < raw.size() && std::isspace(static_cast<unsigned char>(raw[rc]))) ++rc;
        statements.push_back({line, detail::trim(raw.substr(0, eq)),
                              std::string(raw.substr(eq + 1)), static_cast<int>(eq + 1)});
      }
      if (end == source.size()) break;
      start = end + 1;
    }
  }

  ModelDef m;
  std::map<std::string, int> params;
  std::optional<int> dim;
  for (const auto& st : statements) {
    if (st.key.rfind("param", 0) == 0 && st.key.size() > 5 &&
        std::isspace(static_cast<unsigned char>(st.key[5]))) {
      const std::string id = detail::trim(st.key.substr(5));
      if (!detail::is_identifier(id) || Parser::coordinate_index(id) ||
          id == "sqrt" || id == "abs" || id == "sin" || id == "cos" || id == "exp" ||
          id == "log") {
        throw SyntaxError(st.line, 1, "invalid parameter name '" + id + "'");
      }
      if (params.count(id)) throw ValidationError("parameter '" + id + "' declared twice");
      const std::string value = detail::trim(st.rhs);
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (value.empty() || *end != '\0' || !std::isfinite(v)) {
        throw SyntaxError(st.line, st.rhs_column + 1, "expected a real number");
      }
      params[id] = static_cast<int>(m.param_names.size());
      m.param_names.push_back(id);
      m.param_values.push_back(v);
    } else if (st.key == "name") {
      m.name = detail::trim(st.rhs);
      if (m.name.empty()) throw SyntaxError(st.line, st.rhs_column + 1, "empty model name");
    } else if (st.key == "dim") {
      const std::string value = detail::trim(st.rhs);
      char* end = nullptr;
      const long v = std::strtol(value.c_str(), &end, 10);
      if (value.empty() || *end != '\0') {
        throw SyntaxError(st.line, st.rhs_column + 1, "expected an integer dimension");
      }
      if (v < 2 || v > 16) throw ValidationError("dim must be between 2 and 16");
      dim = static_cast<int>(v);
    }
  }
  if (!dim) throw ValidationError("missing 'dim =' line");
  if (m.name.empty()) throw ValidationError("missing 'name =' line");
  m.dim = *dim;
  m.phi.resize(m.n());

  ParamLookup lookup = [&params](const std::string& id) -> std::optional<int> {
    auto it = params.find(id);
    if (it == params.end()) return std::nullopt;
    return it->second;
  };
  auto parse_rhs = [&](const detail::Statement& st) {
    return Parser(st.rhs, lookup, st.line, st.rhs_column).parse();
  };

  VariableUse all;
  for (const auto& st : statements) {
    if (st.key == "name" || st.key == "dim" || st.key.rfind("param", 0) == 0) continue;
    if (st.key == "F") {
      if (m.F) throw ValidationError("F defined twice");
      m.F = parse_rhs(st);
      collect_variables(m.F, all);
    } else if (st.key == "domain") {
      m.domain.push_back(parse_rhs(st));
      collect_variables(m.domain.back(), all);
    } else if (st.key.rfind("phi", 0) == 0 && st.key.size() > 3) {
      int k = 0;
      try {
        std::size_t used = 0;
        k = std::stoi(st.key.substr(3), &used);
        if (used != st.key.size() - 3) k = 0;
      } catch (const std::exception&) {
        k = 0;
      }
      if (k < 1) throw SyntaxError(st.line, 1, "malformed key '" + st.key + "'");
      if (k > m.dim) {
        throw ValidationError("dim mismatch: " + st.key + " exceeds dim " + std::to_string(m.dim));
      }
      auto& slot = m.phi[static_cast<std::size_t>(k - 1)];
      if (slot) throw ValidationError(st.key + " defined twice");
      slot = parse_rhs(st);
      const VariableUse use = variables_of(slot);
      if (use.max_y > 0) {
        throw ValidationError("line " + std::to_string(st.line) + ": " + st.key +
                              " uses a y-variable; concurrent fields depend on x only");
      }
      collect_variables(slot, all);
    } else {
      throw SyntaxError(st.line, 1, "unknown key '" + st.key + "'");
    }
  }
  if (!m.F) throw ValidationError("missing 'F =' line");
  for (std::size_t k = 0; k < m.n(); ++k) {
    if (!m.phi[k]) throw ValidationError("missing phi" + std::to_string(k + 1));
  }
  const int highest = std::max(all.max_x, all.max_y);
  if (highest != m.dim) {
    throw ValidationError("dim mismatch: dim = " + std::to_string(m.dim) +
                          " but the highest variable index used is " + std::to_string(highest));
  }
  return m;
}

inline ModelDef load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

/// Canonical source text; parse_model(print_model(m)) reproduces m.
inline std::string print_model(const ModelDef& m) {
  std::ostringstream out;
  out << "name = " << m.name << "\n" << "dim = " << m.dim << "\n";
  for (std::size_t i = 0; i < m.param_names.size(); ++i) {
    out << "param " << m.param_names[i] << " = " << detail::format_number(m.param_values[i]) << "\n";
  }
  out << "F = " << print(m.F) << "\n";
  for (std::size_t k = 0; k < m.phi.size(); ++k) out << "phi" << k + 1 << " = " << print(m.phi[k]) << "\n";
  for (const auto& d : m.domain) out << "domain = " << print(d) << "\n";
  return out.str();
}

/// A point (x, y) of the slit tangent bundle.
struct TangentSample {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<bool> in_domain;  // one flag per domain constraint

  bool inside() const {
    bool nonzero = false;
    for (double v : y) nonzero = nonzero || v != 0.0;
    if (!nonzero) return false;
    for (bool b : in_domain) {
      if (!b) return false;
    }
    return true;
  }
};

inline std::vector<double> coordinates(std::span<const double> x, std::span<const double> y) {
  std::vector<double> c(x.begin(), x.end());
  c.insert(c.end(), y.begin(), y.end());
  return c;
}

/// True when every domain constraint is strictly positive at coords.
inline bool satisfies_domain(const ModelDef& m, std::span<const double> coords) {
  for (const auto& d : m.domain) {
    try {
      if (!(evaluate<double>(d, coords, m.n(), m.param_values) > 0.0)) return false;
    } catch (const EvalError&) {
      return false;
    }
  }
  return true;
}

inline TangentSample make_sample(const ModelDef& m, std::vector<double> x, std::vector<double> y) {
  if (x.size() != m.n() || y.size() != m.n()) {
    throw PreconditionError("sample dimension does not match the model");
  }
  TangentSample s{std::move(x), std::move(y), {}};
  const auto c = coordinates(s.x, s.y);
  for (const auto& d : m.domain) {
    bool ok = false;
    try {
      ok = evaluate<double>(d, std::span<const double>(c), m.n(), m.param_values) > 0.0;
    } catch (const EvalError&) {
      ok = false;
    }
    s.in_domain.push_back(ok);
  }
  return s;
}

inline void require_inside(const TangentSample& s) {
  if (!s.inside()) throw DomainEscape("sample is outside the model domain (or y = 0)");
}

/// phi^i(x) for every component.
inline std::vector<double> concurrent_field(const ModelDef& m, std::span<const double> x) {
  std::vector<double> out;
  for (const auto& p : m.phi) out.push_back(evaluate<double>(p, x, m.n(), m.param_values));
  return out;
}

}  // namespace finslerlab
