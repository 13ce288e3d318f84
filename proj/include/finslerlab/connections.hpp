#pragma once

// Spray, nonlinear connection, Berwald and Cartan coefficients, Barthel
// curvature, the concurrency probe and a geodesic integrator.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "finslerlab/core.hpp"
#include "finslerlab/error.hpp"
#include "finslerlab/function.hpp"
#include "finslerlab/geometry.hpp"
#include "finslerlab/linalg.hpp"
#include "finslerlab/model.hpp"

namespace finslerlab {

struct ConnectionData {
  std::vector<double> sprayG;
  Matrix<double> N;
  Tensor3<double> berwald;
  Tensor3<double> curvR;
  Tensor3<double> cartanGamma;
};

namespace detail {

inline JetGeometry checked_geometry(const FinslerFunction& f, const TangentSample& s, int order) {
  require_inside(s);
  if (!f.contains(coordinates(s.x, s.y))) throw DomainEscape("sample outside the domain of " + f.name());
  JetGeometry geo = build_geometry(f, s.x, s.y, order);
  check_nonsingular(values(geo.g), geo.det);
  return geo;
}

}  // namespace detail

inline ConnectionData connection_data_from(const JetGeometry& geo) {
  ConnectionData c;
  c.sprayG = values(geo.spray);
  if (geo.has_connection()) {
    c.N = values(geo.N);
    c.cartanGamma = values(geo.cartanGamma);
  }
  if (geo.has_berwald()) {
    c.berwald = values(geo.berwald);
    c.curvR = values(geo.curvature);
  }
  return c;
}

inline ConnectionData connection_data(const FinslerFunction& f, const TangentSample& s) {
  return connection_data_from(detail::checked_geometry(f, s, kFullOrder));
}

/// G^i with geodesics solving x'' + 2 G(x, x') = 0.
inline std::vector<double> spray(const FinslerFunction& f, const TangentSample& s) {
  return values(detail::checked_geometry(f, s, 2).spray);
}
inline std::vector<double> spray(const ModelDef& m, const TangentSample& s) {
  return spray(ModelFunction(m), s);
}

/// N^i_j = dG^i / dy^j.
inline Matrix<double> nonlinear_connection(const FinslerFunction& f, const TangentSample& s) {
  return values(detail::checked_geometry(f, s, 3).N);
}
inline Matrix<double> nonlinear_connection(const ModelDef& m, const TangentSample& s) {
  return nonlinear_connection(ModelFunction(m), s);
}

/// G^i_jk = d^2 G^i / dy^j dy^k.
inline Tensor3<double> berwald_coeffs(const FinslerFunction& f, const TangentSample& s) {
  return values(detail::checked_geometry(f, s, 4).berwald);
}
inline Tensor3<double> berwald_coeffs(const ModelDef& m, const TangentSample& s) {
  return berwald_coeffs(ModelFunction(m), s);
}

/// R^i_jk = delta_j N^i_k - delta_k N^i_j.
inline Tensor3<double> barthel_curvature(const FinslerFunction& f, const TangentSample& s) {
  return values(detail::checked_geometry(f, s, 4).curvature);
}
inline Tensor3<double> barthel_curvature(const ModelDef& m, const TangentSample& s) {
  return barthel_curvature(ModelFunction(m), s);
}

/// Horizontal coefficients Gamma^i_jk of the Cartan connection.
inline Tensor3<double> cartan_hcoeffs(const FinslerFunction& f, const TangentSample& s) {
  return values(detail::checked_geometry(f, s, 3).cartanGamma);
}
inline Tensor3<double> cartan_hcoeffs(const ModelDef& m, const TangentSample& s) {
  return cartan_hcoeffs(ModelFunction(m), s);
}

struct CovariantReport {
  Matrix<double> hcov_phi;              // phi^i_|j at the worst sample
  Matrix<double> vcov_phi_contraction;  // phi^k C_kij at the worst sample
  double sigma = 0.0;                   // phi^i_|j ~ sigma delta^i_j, sigma in {+1, -1}
  double trace_mean = 0.0;              // mean of phi^i_|i / n over the batch
  double residual = 0.0;                // max_samples ||phi^i_|j - sigma I||_max
  double vertical = 0.0;                // max_samples ||phi^k C_kij||_max
  std::size_t worst_sample = 0;
  std::size_t samples = 0;
};

/// Sign closest to a mean trace; zero maps to +1.
inline double fitted_sign(double trace_mean) { return trace_mean < 0.0 ? -1.0 : 1.0; }

/// phi^i_|j = d phi^i / dx^j + phi^k Gamma^i_jk and phi^k C_kij at one sample.
inline std::pair<Matrix<double>, Matrix<double>> covariant_phi(const ModelFunction& f,
                                                               const JetGeometry& geo) {
  const std::size_t n = geo.n;
  const auto phi = f.phi(geo.coords);
  Matrix<double> h(n, n, 0.0);
  Matrix<double> v(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = horizontal_derivative(phi[i], j, geo.N, n).value();
      double vsum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        sum += phi[k].value() * geo.cartanGamma(i, j, k).value();
        vsum += phi[k].value() * geo.cartanC(k, i, j).value();
      }
      h(i, j) = sum;
      v(i, j) = vsum;
    }
  }
  return {h, v};
}

inline CovariantReport concurrency_probe(const ModelDef& model, std::span<const TangentSample> batch) {
  if (batch.empty()) throw PreconditionError("concurrency_probe: empty batch");
  const ModelFunction f(model);
  const std::size_t n = model.n();
  std::vector<Matrix<double>> H;
  std::vector<Matrix<double>> V;
  double trace_sum = 0.0;
  for (const auto& s : batch) {
    const JetGeometry geo = detail::checked_geometry(f, s, 3);
    auto [h, v] = covariant_phi(f, geo);
    for (std::size_t i = 0; i < n; ++i) trace_sum += h(i, i);
    H.push_back(std::move(h));
    V.push_back(std::move(v));
  }
  CovariantReport r;
  r.samples = batch.size();
  r.trace_mean = trace_sum / static_cast<double>(n * batch.size());
  r.sigma = fitted_sign(r.trace_mean);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    double res = 0.0;
    double vert = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        res = std::max(res, std::abs(H[b](i, j) - (i == j ? r.sigma : 0.0)));
        vert = std::max(vert, std::abs(V[b](i, j)));
      }
    }
    if (b == 0 || res > r.residual) {
      r.residual = res;
      r.worst_sample = b;
    }
    r.vertical = std::max(r.vertical, vert);
  }
  r.hcov_phi = H[r.worst_sample];
  r.vcov_phi_contraction = V[r.worst_sample];
  return r;
}

struct TrajectoryPoint {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> y;
  double F = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  bool escaped = false;
  double escape_time = 0.0;

  /// max_t |F(t) - F(0)| / F(0).
  double max_relative_drift() const {
    double d = 0.0;
    for (const auto& p : points) d = std::max(d, std::abs(p.F - points.front().F) / points.front().F);
    return d;
  }
};

/// RK4 for x' = y, y' = -2 G(x, y). Stops at the first state outside the
/// domain; with throw_on_escape that raises DomainEscape carrying the time.
inline Trajectory integrate_geodesic(const FinslerFunction& f, const TangentSample& s0, double t_end,
                                     double step, bool throw_on_escape = false) {
  if (!(step > 0.0)) throw PreconditionError("integrate_geodesic: step must be > 0");
  if (!(t_end >= 0.0)) throw PreconditionError("integrate_geodesic: t_end must be >= 0");
  require_inside(s0);
  const std::size_t n = f.dim();
  auto inside = [&](const std::vector<double>& x, const std::vector<double>& y) {
    return f.contains(coordinates(x, y));
  };
  if (!inside(s0.x, s0.y)) throw DomainEscape("initial state outside the domain", 0.0);

  auto accel = [&](const std::vector<double>& x, const std::vector<double>& y) {
    auto G = values(build_geometry(f, x, y, 2).spray);
    for (double& v : G) v *= -2.0;
    return G;
  };
  auto axpy = [](const std::vector<double>& a, double h, const std::vector<double>& b) {
    std::vector<double> out(a);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += h * b[i];
    return out;
  };

  Trajectory traj;
  std::vector<double> x = s0.x;
  std::vector<double> y = s0.y;
  traj.points.push_back({0.0, x, y, f.value(coordinates(x, y))});
  const auto steps = static_cast<long>(std::ceil(t_end / step - 1e-9));
  double t = 0.0;
  for (long k = 0; k < steps; ++k) {
    const double h = std::min(step, t_end - t);
    std::vector<double> x1, y1;
    try {
      const auto k1x = y;
      const auto k1y = accel(x, y);
      const auto x2 = axpy(x, 0.5 * h, k1x), y2 = axpy(y, 0.5 * h, k1y);
      if (!inside(x2, y2)) throw DomainEscape("stage outside domain");
      const auto k2x = y2;
      const auto k2y = accel(x2, y2);
      const auto x3 = axpy(x, 0.5 * h, k2x), y3 = axpy(y, 0.5 * h, k2y);
      if (!inside(x3, y3)) throw DomainEscape("stage outside domain");
      const auto k3x = y3;
      const auto k3y = accel(x3, y3);
      const auto x4 = axpy(x, h, k3x), y4 = axpy(y, h, k3y);
      if (!inside(x4, y4)) throw DomainEscape("stage outside domain");
      const auto k4x = y4;
      const auto k4y = accel(x4, y4);
      x1 = x;
      y1 = y;
      for (std::size_t i = 0; i < n; ++i) {
        x1[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        y1[i] += h / 6.0 * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]);
      }
      if (!inside(x1, y1)) throw DomainEscape("state outside domain");
    } catch (const Error&) {
      traj.escaped = true;
      traj.escape_time = t;
      if (throw_on_escape) throw DomainEscape("geodesic left the domain", t);
      return traj;
    }
    t = (k + 1 == steps) ? t_end : t + h;
    x = std::move(x1);
    y = std::move(y1);
    traj.points.push_back({t, x, y, f.value(coordinates(x, y))});
  }
  return traj;
}

/// CSV with columns t, x1..xn, y1..yn, F.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj, std::size_t n) {
  out << "t";
  for (std::size_t i = 1; i <= n; ++i) out << ",x" << i;
  for (std::size_t i = 1; i <= n; ++i) out << ",y" << i;
  out << ",F\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const auto& p : traj.points) {
    put(p.t);
    for (double v : p.x) out << ',', put(v);
    for (double v : p.y) out << ',', put(v);
    out << ',';
    put(p.F);
    out << '\n';
  }
}

}  // namespace finslerlab
