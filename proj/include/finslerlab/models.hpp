#pragma once

// Shipped models, closed forms of the three-dimensional example and the
// reference fixture table.

#include <cmath>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/linalg.hpp"
#include "finslerlab/model.hpp"

namespace finslerlab {

inline constexpr std::string_view kMatsumotoExampleSource = R"(# Conic metric on R^3 admitting the concurrent field x3 d/dx3.
name = matsumoto_example
dim = 3
F = sqrt(x3^2*((x1^2*y2^2 + 2*y1*y2)/y1)^2 + y3^2)
phi1 = 0
phi2 = 0
phi3 = x3
# x1 != 0, x3 != 0, y1 != 0, y2 != 0
domain = x1^2
domain = x3^2
domain = y1^2
domain = y2^2
)";

inline constexpr std::string_view kEuclidConcurrentSource = R"(# Flat plane with the concurrent field -x (its covariant derivative is -id).
name = euclid_concurrent
dim = 2
F = sqrt(y1^2 + y2^2)
phi1 = -x1
phi2 = -x2
)";

inline std::vector<ModelDef> builtin_models() {
  return {parse_model(kMatsumotoExampleSource), parse_model(kEuclidConcurrentSource)};
}

inline ModelDef builtin_model(std::string_view name) {
  for (auto& m : builtin_models()) {
    if (m.name == name) return m;
  }
  throw PreconditionError("no built-in model named '" + std::string(name) + "'");
}

/// True when `m` is the shipped three-dimensional example (same name and F).
inline bool is_matsumoto_example(const ModelDef& m) {
  if (m.name != "matsumoto_example" || m.dim != 3) return false;
  const ModelDef ref = parse_model(kMatsumotoExampleSource);
  if (!equal(m.F, ref.F)) return false;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!equal(m.phi[k], ref.phi[k])) return false;
  }
  return true;
}

/// Closed forms of the example metric, written out component by component.
namespace example {

struct Vars {
  double x1, x2, x3, y1, y2, y3;
};

inline Vars unpack(std::span<const double> x, std::span<const double> y) {
  if (x.size() != 3 || y.size() != 3) throw PreconditionError("example closed forms are three-dimensional");
  return {x[0], x[1], x[2], y[0], y[1], y[2]};
}

inline double F2(std::span<const double> x, std::span<const double> y) {
  const auto v = unpack(x, y);
  const double q = (v.x1 * v.x1 * v.y2 * v.y2 + 2.0 * v.y1 * v.y2) / v.y1;
  return v.x3 * v.x3 * q * q + v.y3 * v.y3;
}

inline Matrix<double> g(std::span<const double> x, std::span<const double> y) {
  const auto [x1, x2, x3, y1, y2, y3] = unpack(x, y);
  (void)x2;
  (void)y3;
  const double a = x1 * x1;
  const double c = x3 * x3;
  Matrix<double> m(3, 3, 0.0);
  m(0, 0) = c * a * std::pow(y2, 3) * (3.0 * a * y2 + 4.0 * y1) / std::pow(y1, 4);
  m(0, 1) = -2.0 * c * a * y2 * y2 * (2.0 * a * y2 + 3.0 * y1) / std::pow(y1, 3);
  m(1, 0) = m(0, 1);
  m(1, 1) = 2.0 * c * (3.0 * a * a * y2 * y2 + 6.0 * a * y1 * y2 + 2.0 * y1 * y1) / (y1 * y1);
  m(2, 2) = 1.0;
  return m;
}

inline Matrix<double> ginv(std::span<const double> x, std::span<const double> y) {
  const auto [x1, x2, x3, y1, y2, y3] = unpack(x, y);
  (void)x2;
  (void)y3;
  const double a = x1 * x1;
  const double c = x3 * x3;
  const double cube = std::pow(a, 3) * std::pow(y2, 3) + 6.0 * a * a * y1 * y2 * y2 +
                      12.0 * a * y1 * y1 * y2 + 8.0 * std::pow(y1, 3);
  Matrix<double> m(3, 3, 0.0);
  m(0, 0) = (3.0 * a * a * y2 * y2 + 6.0 * a * y1 * y2 + 2.0 * y1 * y1) * std::pow(y1, 4) /
            (c * a * std::pow(y2, 3) * cube);
  m(0, 1) = (2.0 * a * y2 + 3.0 * y1) * std::pow(y1, 3) / (c * y2 * cube);
  m(1, 0) = m(0, 1);
  m(1, 1) = 0.5 * (3.0 * a * y2 + 4.0 * y1) * y1 * y1 / (c * cube);
  m(2, 2) = 1.0;
  return m;
}

/// Totally symmetric C_ijk filled from C111, C112, C122, C222.
inline Tensor3<double> cartan_torsion(std::span<const double> x, std::span<const double> y) {
  const auto [x1, x2, x3, y1, y2, y3] = unpack(x, y);
  (void)x2;
  (void)y3;
  const double k = 6.0 * x1 * x1 * x3 * x3 * (x1 * x1 * y2 + y1);
  const double c111 = -k * std::pow(y2, 3) / std::pow(y1, 5);
  const double c112 = k * y2 * y2 / std::pow(y1, 4);
  const double c122 = -k * y2 / std::pow(y1, 3);
  const double c222 = k / (y1 * y1);
  Tensor3<double> t(3, 0.0);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t l = 0; l < 2; ++l) {
        const std::size_t twos = (i == 1) + (j == 1) + (l == 1);
        t(i, j, l) = twos == 0 ? c111 : twos == 1 ? c112 : twos == 2 ? c122 : c222;
      }
  return t;
}

inline std::vector<double> spray(std::span<const double> x, std::span<const double> y) {
  const auto [x1, x2, x3, y1, y2, y3] = unpack(x, y);
  (void)x2;
  const double a = x1 * x1;
  return {(x1 * y3 - x3 * y1) * y1 / (x1 * x3), y2 * y3 / x3,
          -x3 * y2 * y2 * (a * a * y2 * y2 + 4.0 * a * y1 * y2 + 4.0 * y1 * y1) / (2.0 * y1 * y1)};
}

/// The known Cartan coefficients: Gamma^1_13, Gamma^2_23, Gamma^3_33.
inline std::vector<double> cartan_gamma(std::span<const double> x) { return {1.0 / x[2], 1.0 / x[2], 0.0}; }

/// g = theta a with theta = (x3 / y1)^2.
inline double theta(std::span<const double> x, std::span<const double> y) {
  const double r = x[2] / y[0];
  return r * r;
}

/// a_12 carries y1 to the first power in the denominator so that theta a_12
/// reproduces g_12 (the two-power form agrees only where y1 = 1).
inline Matrix<double> a(std::span<const double> x, std::span<const double> y) {
  const auto [x1, x2, x3, y1, y2, y3] = unpack(x, y);
  (void)x2;
  (void)y3;
  const double s = x1 * x1;
  Matrix<double> m(3, 3, 0.0);
  m(0, 0) = s * std::pow(y2, 3) * (3.0 * s * y2 + 4.0 * y1) / (y1 * y1);
  m(0, 1) = -2.0 * s * y2 * y2 * (2.0 * s * y2 + 3.0 * y1) / y1;
  m(1, 0) = m(0, 1);
  m(1, 1) = 2.0 * (3.0 * s * s * y2 * y2 + 6.0 * s * y1 * y2 + 2.0 * y1 * y1);
  m(2, 2) = (y1 / x3) * (y1 / x3);
  return m;
}

}  // namespace example

/// One reference value of the fixture table.
struct ReferenceFixture {
  std::string model;
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  double value = 0.0;
  double tolerance = 1e-8;
  std::string provenance;
};

namespace detail {

inline std::vector<double> parse_vector(const std::string& text, int line) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') throw SyntaxError(line, 1, "bad number '" + item + "' in fixture point");
    out.push_back(v);
  }
  return out;
}

}  // namespace detail

/// Whitespace-separated rows: model name x1,..,xn y1,..,yn value tolerance provenance.
inline std::vector<ReferenceFixture> parse_fixtures(std::string_view text) {
  std::vector<ReferenceFixture> out;
  std::stringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::stringstream row(raw);
    std::vector<std::string> cols;
    for (std::string c; row >> c;) cols.push_back(c);
    if (cols.empty()) continue;
    if (cols.size() != 7) throw SyntaxError(line, 1, "expected 7 columns in fixture row");
    ReferenceFixture f;
    f.model = cols[0];
    f.name = cols[1];
    f.x = detail::parse_vector(cols[2], line);
    f.y = detail::parse_vector(cols[3], line);
    f.value = detail::parse_vector(cols[4], line).at(0);
    f.tolerance = detail::parse_vector(cols[5], line).at(0);
    f.provenance = cols[6];
    out.push_back(std::move(f));
  }
  return out;
}

inline std::vector<ReferenceFixture> load_fixtures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fixture file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_fixtures(buf.str());
}

}  // namespace finslerlab
