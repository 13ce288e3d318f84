#pragma once

// Jet-level Finsler geometry at one tangent sample.
//
// Everything is derived from a single jet of F^2 in the 2n variables
// (x, y). With F^2 known to derivative order K the objects below are
// available to the orders
//
//   g, g^-1, spray G       K-2
//   C, N, Cartan Gamma     K-3   (need K >= 3)
//   Berwald, curvature R   K-4   (need K >= 4)
//
// Local conventions:
//   g_ij   = 1/2 d^2 F^2 / dy^i dy^j
//   C_ijk  = 1/4 d^3 F^2 / dy^i dy^j dy^k
//   G^i    = 1/4 g^il (y^k d^2 F^2 / dy^l dx^k - dF^2 / dx^l)
//            (spray vector field y^i d/dx^i - 2 G^i d/dy^i)
//   N^i_j  = dG^i / dy^j,   G^i_jk = dN^i_j / dy^k
//   delta_j = d/dx^j - N^m_j d/dy^m
//   R^i_jk = delta_j N^i_k - delta_k N^i_j
//   Gamma^i_jk = 1/2 g^is (delta_j g_sk + delta_k g_js - delta_s g_jk)

#include <cmath>
#include <span>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/function.hpp"
#include "finslerlab/jet.hpp"
#include "finslerlab/linalg.hpp"

namespace finslerlab {

/// Default derivative order of F^2 used by the full engine.
inline constexpr int kFullOrder = 4;

struct JetGeometry {
  std::size_t n = 0;
  int f2_order = 0;
  std::vector<Jet> coords;
  std::vector<Jet> F2;  // single element; vector keeps Jet default-free
  std::vector<Jet> F;
  std::vector<Jet> ell;
  Matrix<Jet> g;
  Matrix<Jet> ginv;
  std::vector<Jet> spray;
  Tensor3<Jet> cartanC;
  Matrix<Jet> N;
  Tensor3<Jet> berwald;
  Tensor3<Jet> curvature;
  Tensor3<Jet> cartanGamma;
  double raw_asymmetry = 0.0;
  double det = 0.0;

  const Jet& f2() const { return F2.front(); }
  const Jet& f() const { return F.front(); }
  const Jet& x(std::size_t i) const { return coords[i]; }
  const Jet& y(std::size_t i) const { return coords[n + i]; }
  int xv(std::size_t i) const { return static_cast<int>(i); }
  int yv(std::size_t i) const { return static_cast<int>(n + i); }

  bool has_connection() const { return N.rows() == n && n > 0; }
  bool has_berwald() const { return berwald.dim() == n && n > 0; }
};

/// delta_j q = dq/dx^j - N^m_j dq/dy^m.
inline Jet horizontal_derivative(const Jet& q, std::size_t j, const Matrix<Jet>& N, std::size_t n) {
  Jet out = q.d(static_cast<int>(j));
  for (std::size_t m = 0; m < n; ++m) out -= N(m, j) * q.d(static_cast<int>(n + m));
  return out;
}

/// R^i_jk = delta_j N^i_k - delta_k N^i_j for any nonlinear connection N.
inline Tensor3<Jet> curvature_of(const Matrix<Jet>& N, std::size_t n) {
  Tensor3<Jet> dN(n, constant_like(N(0, 0), 0.0));  // dN(i,k,j) = delta_j N^i_k
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) dN(i, k, j) = horizontal_derivative(N(i, k), j, N, n);
  Tensor3<Jet> R(n, constant_like(N(0, 0), 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) R(i, j, k) = dN(i, k, j) - dN(i, j, k);
  return R;
}

/// d/dy^j of every component of a vector of jets.
inline Matrix<Jet> vertical_jacobian(const std::vector<Jet>& v, std::size_t n) {
  Matrix<Jet> out(v.size(), n, constant_like(v.front(), 0.0));
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = v[i].d(static_cast<int>(n + j));
  return out;
}

inline Tensor3<Jet> vertical_jacobian(const Matrix<Jet>& m, std::size_t n) {
  Tensor3<Jet> out(n, constant_like(m(0, 0), 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) out(i, j, k) = m(i, j).d(static_cast<int>(n + k));
  return out;
}

/// Build the geometry of `f` at (x, y) with F^2 known to order f2_order.
inline JetGeometry build_geometry(const FinslerFunction& f, std::span<const double> x,
                                  std::span<const double> y, int f2_order = kFullOrder) {
  if (f2_order < 2) throw PreconditionError("build_geometry: need F^2 to order >= 2");
  const std::size_t n = f.dim();
  if (x.size() != n || y.size() != n) throw PreconditionError("build_geometry: dimension mismatch");
  JetGeometry geo;
  geo.n = n;
  geo.f2_order = f2_order;
  geo.coords = lift(x, y, f2_order + f.order_loss());
  geo.F2.push_back(f.squared(geo.coords));
  const Jet& f2 = geo.f2();
  if (!(f2.value() > 0.0)) throw DomainEscape("F^2 <= 0 at sample");
  geo.F.push_back(sqrt(f2));

  const Jet zero = constant_like(f2, 0.0);
  std::vector<Jet> df2_dy;
  for (std::size_t i = 0; i < n; ++i) df2_dy.push_back(f2.d(geo.yv(i)));
  for (std::size_t i = 0; i < n; ++i) geo.ell.push_back(geo.f().d(geo.yv(i)));

  // g from both derivative orders, averaged.
  geo.g = Matrix<Jet>(n, n, zero);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Jet gij = df2_dy[i].d(geo.yv(j));
      const Jet gji = df2_dy[j].d(geo.yv(i));
      geo.raw_asymmetry = std::max(geo.raw_asymmetry, std::abs(gij.value() - gji.value()));
      geo.g(i, j) = (gij + gji) * 0.25;
    }
  }
  const LU<Jet> lu(geo.g);
  geo.det = lu.determinant().value();
  geo.ginv = lu.inverse();

  // spray: g (4G) = y^k d^2F^2/dy^l dx^k - dF^2/dx^l
  std::vector<Jet> rhs;
  for (std::size_t l = 0; l < n; ++l) {
    Jet r = -f2.d(geo.xv(l));
    for (std::size_t k = 0; k < n; ++k) r += geo.y(k) * df2_dy[l].d(geo.xv(k));
    rhs.push_back(r * 0.25);
  }
  geo.spray = lu.solve(rhs);

  if (f2_order >= 3) {
    geo.cartanC = Tensor3<Jet>(n, zero);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) geo.cartanC(i, j, k) = geo.g(i, j).d(geo.yv(k)) * 0.5;

    geo.N = vertical_jacobian(geo.spray, n);

    // dg(a, b, j) = delta_j g_ab
    Tensor3<Jet> dg(n, zero);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t j = 0; j < n; ++j) dg(a, b, j) = horizontal_derivative(geo.g(a, b), j, geo.N, n);
    geo.cartanGamma = Tensor3<Jet>(n, zero);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
          Jet sum = zero;
          for (std::size_t s = 0; s < n; ++s) {
            sum += geo.ginv(i, s) * (dg(s, k, j) + dg(j, s, k) - dg(j, k, s));
          }
          geo.cartanGamma(i, j, k) = sum * 0.5;
        }
  }
  if (f2_order >= 4) {
    geo.berwald = vertical_jacobian(geo.N, n);
    geo.curvature = curvature_of(geo.N, n);
  }
  return geo;
}

}  // namespace finslerlab
