#pragma once

// Zeroth-order Finsler objects at a tangent sample.

#include <Eigen/Eigenvalues>
#include <cmath>
#include <span>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/function.hpp"
#include "finslerlab/geometry.hpp"
#include "finslerlab/linalg.hpp"
#include "finslerlab/model.hpp"

namespace finslerlab {

struct Signature {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

struct MetricData {
  double F = 0.0;
  double E = 0.0;
  Matrix<double> g;
  Matrix<double> ginv;
  std::vector<double> ell;
  Matrix<double> hbar;
  Tensor3<double> cartanC;
  double det = 0.0;
  double condition = 0.0;  // ||g||_inf ||g^-1||_inf
  Signature signature;
};

/// Threshold for SingularMetric is this times (geometric mean |g_ii|)^n.
inline constexpr double kSingularRelative = 1e-12;
/// Raw asymmetry of g tolerated before averaging.
inline constexpr double kMaxRawAsymmetry = 1e-12;
/// Condition numbers above this are flagged in reports.
inline constexpr double kConditionWarning = 1e8;

inline Signature signature_of(const Matrix<double>& g) {
  const auto n = static_cast<Eigen::Index>(g.rows());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = g(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  Signature s;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(ev(i)) <= 1e-12 * scale) {
      ++s.zero;
    } else if (ev(i) > 0.0) {
      ++s.positive;
    } else {
      ++s.negative;
    }
  }
  return s;
}

/// Determinant scale (geometric mean of |g_ii|)^n, falling back to max|g_ij|.
inline double determinant_scale(const Matrix<double>& g) {
  const std::size_t n = g.rows();
  double log_sum = 0.0;
  bool zero_diag = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(g(i, i));
    if (d == 0.0) {
      zero_diag = true;
      break;
    }
    log_sum += std::log(d);
  }
  if (!zero_diag) return std::exp(log_sum);
  double m = 0.0;
  for (double v : g.data()) m = std::max(m, std::abs(v));
  return std::pow(m, static_cast<double>(n));
}

inline void check_nonsingular(const Matrix<double>& g, double det) {
  if (std::abs(det) < kSingularRelative * determinant_scale(g)) {
    throw SingularMetric("fundamental tensor is singular at this sample");
  }
}

/// Value-level metric data from an already built jet geometry.
inline MetricData metric_data_from(const JetGeometry& geo) {
  if (geo.raw_asymmetry > kMaxRawAsymmetry * std::max(1.0, max_abs(values(geo.g.data())))) {
    throw Error("fundamental tensor: raw asymmetry above tolerance");
  }
  const std::size_t n = geo.n;
  MetricData m;
  m.F = geo.f().value();
  m.E = 0.5 * geo.f2().value();
  m.g = values(geo.g);
  m.det = geo.det;
  check_nonsingular(m.g, m.det);
  m.ginv = values(geo.ginv);
  m.ell = values(geo.ell);
  m.hbar = Matrix<double>(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.hbar(i, j) = m.g(i, j) - m.ell[i] * m.ell[j];
  if (geo.cartanC.dim() == n) m.cartanC = values(geo.cartanC);
  m.condition = norm_inf(m.g) * norm_inf(m.ginv);
  m.signature = signature_of(m.g);
  return m;
}

inline MetricData metric_data(const FinslerFunction& f, const TangentSample& s) {
  require_inside(s);
  const auto c = coordinates(s.x, s.y);
  if (!f.contains(c)) throw DomainEscape("sample outside the domain of " + f.name());
  return metric_data_from(build_geometry(f, s.x, s.y, 3));
}

inline MetricData metric_data(const ModelDef& model, const TangentSample& s) {
  return metric_data(ModelFunction(model), s);
}

struct HomogeneityResidual {
  double lambda = 0.0;
  double F = 0.0;  // |F(x, ly) - l F(x, y)| / max(1, |l F|)
  double g = 0.0;  // ||g(x, ly) - g(x, y)||_inf / max(1, ||g||)
  double C = 0.0;  // ||l C(x, ly) - C(x, y)||_inf / max(1, ||C||)
};

struct HomogeneityReport {
  std::vector<HomogeneityResidual> residuals;

  double worst() const {
    double w = 0.0;
    for (const auto& r : residuals) w = std::max({w, r.F, r.g, r.C});
    return w;
  }
};

inline double relative_difference(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / std::max(1.0, max_abs(b));
}

namespace detail {

struct RawMetric {
  double F = 0.0;
  std::vector<double> g;
  std::vector<double> C;
};

// F, g and C straight from an order-3 jet of F^2, without inverting g.
inline RawMetric raw_metric(const FinslerFunction& f, std::span<const double> x,
                            std::span<const double> y) {
  const std::size_t n = f.dim();
  const auto coords = lift(x, y, 3 + f.order_loss());
  const Jet f2 = f.squared(coords);
  RawMetric r;
  r.F = std::sqrt(f2.value());
  for (std::size_t i = 0; i < n; ++i) {
    const Jet di = f2.d(static_cast<int>(n + i));
    for (std::size_t j = 0; j < n; ++j) {
      const Jet dij = di.d(static_cast<int>(n + j));
      r.g.push_back(0.5 * dij.value());
      for (std::size_t k = 0; k < n; ++k) r.C.push_back(0.25 * dij.d(static_cast<int>(n + k)).value());
    }
  }
  return r;
}

}  // namespace detail

/// Residuals of degree-1 homogeneity of F (degree 0 for g, degree -1 for C).
/// Does not require g to be invertible.
inline HomogeneityReport homogeneity_report(const FinslerFunction& f, const TangentSample& s,
                                            std::span<const double> lambdas = std::vector<double>{0.5, 2.0, 3.0}) {
  require_inside(s);
  if (!f.contains(coordinates(s.x, s.y))) throw DomainEscape("sample outside the domain of " + f.name());
  const detail::RawMetric base = detail::raw_metric(f, s.x, s.y);
  HomogeneityReport report;
  for (double lambda : lambdas) {
    std::vector<double> y = s.y;
    for (double& v : y) v *= lambda;
    if (!f.contains(coordinates(s.x, y))) {
      throw DomainEscape("scaled sample leaves the domain (domain is not conic)");
    }
    const detail::RawMetric m = detail::raw_metric(f, s.x, y);
    HomogeneityResidual r;
    r.lambda = lambda;
    r.F = std::abs(m.F - lambda * base.F) / std::max(1.0, std::abs(lambda * base.F));
    r.g = relative_difference(m.g, base.g);
    std::vector<double> scaledC = m.C;
    for (double& v : scaledC) v *= lambda;
    r.C = relative_difference(scaledC, base.C);
    report.residuals.push_back(r);
  }
  return report;
}

inline HomogeneityReport homogeneity_report(const ModelDef& model, const TangentSample& s) {
  return homogeneity_report(ModelFunction(model), s);
}

}  // namespace finslerlab
