#pragma once

// The phi-Matsumoto change F^ = F^2 / (F - Phi).
//
// Conventions. `orientation` (+1 or -1) multiplies phi before anything is
// formed from it, so Phi = orientation * g(phi, y) and every phi below is the
// oriented field. Predicted objects are built from jets of F; direct objects
// come from the geometry engine run on F^ itself.
//
//   p^2    = g_ij phi^i phi^j
//   margin = F (1 + 2 p^2) - 3 Phi
//   f1     = F (4 Phi - F) / margin,   f2 = 2 F^3 / margin
//   G^     = G + f1 y / 2 - f2 phi / 2
//   N^     = N + (f1 I + y (df1/dy) - phi (df2/dy)) / 2

#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finslerlab/connections.hpp"
#include "finslerlab/core.hpp"
#include "finslerlab/error.hpp"
#include "finslerlab/finite_difference.hpp"
#include "finslerlab/function.hpp"
#include "finslerlab/geometry.hpp"
#include "finslerlab/linalg.hpp"
#include "finslerlab/model.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/report.hpp"

namespace finslerlab {

struct ChangeScalars {
  double F = 0.0;
  double Phi = 0.0;
  double p2 = 0.0;
  double margin = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  double Fhat = 0.0;
  int orientation = 1;
  std::vector<double> y;
  std::vector<double> phi;      // oriented phi^i
  std::vector<double> phi_low;  // phi_i = g_ij phi^j
};

template <class T>
struct ChangeTerms {
  T F;
  T Phi;
  T p2;
  T margin;
  T f1;
  T f2;
  std::vector<T> phi;
  std::vector<T> phi_low;
};

/// Change scalars as jets over the geometry's coordinate space.
inline ChangeTerms<Jet> change_terms(const ModelFunction& base, const JetGeometry& geo, int orientation) {
  const std::size_t n = geo.n;
  const auto raw = base.phi(geo.coords);
  std::vector<Jet> phi;
  for (const auto& p : raw) phi.push_back(p * static_cast<double>(orientation));
  const Jet Phi = support_value(geo.f2(), raw, orientation, n);
  std::vector<Jet> low;
  Jet p2 = constant_like(geo.f2(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    Jet s = constant_like(geo.f2(), 0.0);
    for (std::size_t j = 0; j < n; ++j) s += geo.g(i, j) * phi[j];
    p2 += s * phi[i];
    low.push_back(s);
  }
  const Jet& F = geo.f();
  const Jet margin = F * (1.0 + 2.0 * p2) - 3.0 * Phi;
  if (std::abs(margin.value()) < 1e-300) throw DegenerateMargin("F(1 + 2p^2) - 3 Phi vanishes at this sample");
  const Jet f1 = F * (4.0 * Phi - F) / margin;
  const Jet f2 = 2.0 * F * F * F / margin;
  return {F, Phi, p2, margin, f1, f2, std::move(phi), std::move(low)};
}

inline ChangeScalars scalars_of(const ChangeTerms<Jet>& t, std::span<const double> y, int orientation) {
  ChangeScalars c;
  c.F = t.F.value();
  c.Phi = t.Phi.value();
  c.p2 = t.p2.value();
  c.margin = t.margin.value();
  c.f1 = t.f1.value();
  c.f2 = t.f2.value();
  c.Fhat = c.F * c.F / (c.F - c.Phi);
  c.orientation = orientation;
  c.y.assign(y.begin(), y.end());
  for (const auto& p : t.phi) c.phi.push_back(p.value());
  for (const auto& p : t.phi_low) c.phi_low.push_back(p.value());
  return c;
}

/// Throws OutsideHatDomain unless F - Phi > tol F, DegenerateMargin unless |margin| > eps F.
inline void check_hat_domain(const ChangeScalars& c, double margin_epsilon = kDefaultMarginEpsilon) {
  if (!(c.F - c.Phi > kHatDomainTolerance * c.F)) throw OutsideHatDomain("F - Phi <= 0 at this sample");
  if (!(std::abs(c.margin) > margin_epsilon * c.F)) {
    throw DegenerateMargin("|F(1 + 2p^2) - 3 Phi| is below the degeneracy threshold");
  }
}

inline int check_orientation(int orientation) {
  if (orientation != 1 && orientation != -1) throw PreconditionError("orientation must be +1 or -1");
  return orientation;
}

inline ChangeScalars change_scalars(const ModelDef& model, const TangentSample& s, int orientation,
                                    double margin_epsilon = kDefaultMarginEpsilon) {
  check_orientation(orientation);
  const ModelFunction f(model);
  const JetGeometry geo = detail::checked_geometry(f, s, 2);
  ChangeScalars c = scalars_of(change_terms(f, geo, orientation), s.y, orientation);
  check_hat_domain(c, margin_epsilon);
  return c;
}

// Predicted objects, generic over double and Jet.

template <class T>
std::vector<T> predicted_supporting_form(const T& F, const T& Phi, const std::vector<T>& ell,
                                         const std::vector<T>& phi_low) {
  const T d = F - Phi;
  const T d2 = d * d;
  const T a = F * (F - 2.0 * Phi) / d2;
  const T b = F * F / d2;
  std::vector<T> out;
  for (std::size_t i = 0; i < ell.size(); ++i) out.push_back(a * ell[i] + b * phi_low[i]);
  return out;
}

template <class T>
Matrix<T> predicted_metric(const T& F, const T& Phi, const Matrix<T>& g, const std::vector<T>& ell,
                           const std::vector<T>& phi_low) {
  const std::size_t n = ell.size();
  const T d = F - Phi;
  const T d3 = d * d * d;
  const T d4 = d3 * d;
  const T F2 = F * F;
  const T cg = F2 * (F - 2.0 * Phi) / d3;
  const T cpp = 3.0 * F2 * F2 / d4;
  const T cll = F2 * Phi * (4.0 * Phi - F) / d4;
  const T cpl = F2 * F * (F - 4.0 * Phi) / d4;
  Matrix<T> out(n, n, constant_like(F, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = cg * g(i, j) + cpp * phi_low[i] * phi_low[j] + cll * ell[i] * ell[j] +
                  cpl * (phi_low[i] * ell[j] + phi_low[j] * ell[i]);
  return out;
}

template <class T>
Matrix<T> predicted_angular(const T& F, const T& Phi, const Matrix<T>& hbar, const std::vector<T>& ell,
                            const std::vector<T>& phi_low) {
  const std::size_t n = ell.size();
  const T d = F - Phi;
  const T d3 = d * d * d;
  const T d4 = d3 * d;
  const T F2 = F * F;
  const T ch = F2 * (F - 2.0 * Phi) / d3;
  const T cpp = 2.0 * F2 * F2 / d4;
  const T cll = 2.0 * Phi * Phi * F2 / d4;
  const T cpl = -2.0 * Phi * F2 * F / d4;
  Matrix<T> out(n, n, constant_like(F, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = ch * hbar(i, j) + cpp * phi_low[i] * phi_low[j] + cll * ell[i] * ell[j] +
                  cpl * (phi_low[i] * ell[j] + phi_low[j] * ell[i]);
  return out;
}

template <class T, class Y>
std::vector<T> predicted_spray(const T& f1, const T& f2, const std::vector<T>& G, const std::vector<Y>& y,
                               const std::vector<T>& phi) {
  std::vector<T> out;
  for (std::size_t i = 0; i < G.size(); ++i) out.push_back(G[i] + 0.5 * f1 * y[i] - 0.5 * f2 * phi[i]);
  return out;
}

/// N^i_j + (f1 delta^i_j + y^i df1/dy^j - phi^i df2/dy^j) / 2.
inline Matrix<Jet> predicted_connection_jets(const Matrix<Jet>& N, const ChangeTerms<Jet>& t,
                                             const std::vector<Jet>& y) {
  const std::size_t n = y.size();
  Matrix<Jet> out = N;
  for (std::size_t j = 0; j < n; ++j) {
    const Jet d1 = t.f1.d(static_cast<int>(n + j));
    const Jet d2 = t.f2.d(static_cast<int>(n + j));
    for (std::size_t i = 0; i < n; ++i) {
      Jet term = y[i] * d1 - t.phi[i] * d2;
      if (i == j) term += t.f1;
      out(i, j) += 0.5 * term;
    }
  }
  return out;
}

inline std::vector<double> predicted_supporting_form(const ChangeScalars& c, const MetricData& m) {
  return predicted_supporting_form<double>(c.F, c.Phi, m.ell, c.phi_low);
}
inline Matrix<double> predicted_metric(const ChangeScalars& c, const MetricData& m) {
  return predicted_metric<double>(c.F, c.Phi, m.g, m.ell, c.phi_low);
}
inline Matrix<double> predicted_angular(const ChangeScalars& c, const MetricData& m) {
  return predicted_angular<double>(c.F, c.Phi, m.hbar, m.ell, c.phi_low);
}
inline std::vector<double> predicted_spray(const ChangeScalars& c, const std::vector<double>& sprayG) {
  return predicted_spray<double, double>(c.f1, c.f2, sprayG, c.y, c.phi);
}

/// Analytic partial derivatives of f1 and f2 in (F, Phi) at fixed p^2.
struct ScalarPartials {
  double df1_dF;
  double df1_dPhi;
  double df2_dF;
  double df2_dPhi;
};

inline ScalarPartials scalar_partials(double F, double Phi, double p2) {
  const double k = 1.0 + 2.0 * p2;
  const double M = F * k - 3.0 * Phi;
  const double M2 = M * M;
  return {((4.0 * Phi - 2.0 * F) * M - F * (4.0 * Phi - F) * k) / M2,
          (4.0 * F * M + 3.0 * F * (4.0 * Phi - F)) / M2,
          (6.0 * F * F * M - 2.0 * F * F * F * k) / M2,
          6.0 * F * F * F / M2};
}

/// One entry of an identity table.
struct IdentitySpec {
  const char* name;
  const char* anchor;
  double tolerance;
};

inline const std::vector<IdentitySpec>& lemma_identities() {
  static const std::vector<IdentitySpec> specs = {
      {"lemma.vertical_Phi", "dPhi/dy^j = phi_j", 1e-8},
      {"lemma.horizontal_Phi", "delta_j Phi = -F l_j", 1e-8},
      {"lemma.Phi_along_spray", "y^j dPhi/dx^j - 2 G^j dPhi/dy^j = -F^2", 1e-8},
      {"lemma.horizontal_F", "delta_j F = 0 (relative to F)", 1e-8},
      {"lemma.vertical_ell", "F dl_i/dy^j = hbar_ij", 1e-8},
      {"lemma.vertical_p2", "dp^2/dy^k = 0", 1e-8},
      {"lemma.chain_rule_f1", "df1/dy^j = (df1/dF) l_j + (df1/dPhi) phi_j", 1e-8},
      {"lemma.chain_rule_f2", "df2/dy^j = (df2/dF) l_j + (df2/dPhi) phi_j", 1e-8},
      {"scalars.consistency", "Phi = phi_i y^i, p^2 = phi_i phi^i, l_i phi^i = Phi/F", 1e-10},
  };
  return specs;
}

inline const std::vector<IdentitySpec>& change_identities() {
  static const std::vector<IdentitySpec> specs = {
      {"change.supporting_form", "l^_i = F(F-2Phi)/(F-Phi)^2 l_i + F^2/(F-Phi)^2 phi_i", 1e-6},
      {"change.angular_metric",
       "hbar^ = F^2(F-2Phi)/(F-Phi)^3 hbar + 2F^4/(F-Phi)^4 phi phi + 2Phi^2F^2/(F-Phi)^4 l l - 2PhiF^3/(F-Phi)^4 (phi l + l phi)",
       1e-6},
      {"change.metric",
       "g^ = F^2(F-2Phi)/(F-Phi)^3 g + 3F^4/(F-Phi)^4 phi phi + F^2Phi(4Phi-F)/(F-Phi)^4 l l + F^3(F-4Phi)/(F-Phi)^4 (phi l + l phi)",
       1e-7},
      {"change.cartan_torsion", "T^_ijk = 1/2 d(g^_ij)/dy^k", 1e-6},
      {"change.spray", "G^ = G + f1 y/2 - f2 phi/2", 1e-6},
      {"change.nonlinear_connection", "N^ = N + (f1 I + y df1/dy - phi df2/dy)/2", 1e-6},
      {"change.berwald", "G^i_jk = dN^i_j/dy^k", 1e-6},
      {"change.curvature", "R^ = curvature of N^", 1e-6},
      {"change.normalization", "l^_i y^i = F^, g^_ij y^i y^j = F^^2", 1e-8},
      {"change.angular_consistency", "g^ = hbar^ + l^ l^", 1e-10},
      {"change.connection_from_spray", "N^ = dG^/dy", 1e-9},
      {"change.vertical_operator", "dF^/dy is the same in the jet spaces of F and F^", 1e-10},
  };
  return specs;
}

/// Everything computed for the change at one sample.
struct ChangeSample {
  ChangeScalars scalars;
  MetricData base;
  ConnectionData base_connection;

  std::vector<double> ell_hat;
  Matrix<double> g_hat;
  Matrix<double> hbar_hat;
  Tensor3<double> cartan_hat;
  std::vector<double> spray_hat;
  Matrix<double> connection_hat;
  Tensor3<double> berwald_hat;
  Tensor3<double> curvature_hat;
  Matrix<double> obstruction;

  // recomputed from F^ itself
  bool has_direct = false;
  MetricData direct;
  ConnectionData direct_connection;

  std::vector<SamplePair> lemma;   // ordered as lemma_identities()
  std::vector<SamplePair> change;  // ordered as change_identities()
  SamplePair obstruction_berwald;  // O vs 2 phi^k (G^ - G)^i_jk - 2 (phi^k df1/dy^k) I
};

namespace detail {

inline std::vector<double> matrix_times(const Matrix<double>& m, const std::vector<double>& v) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i] += m(i, j) * v[j];
  return out;
}

inline std::vector<double> value_vector(const std::vector<Jet>& v) {
  std::vector<double> out;
  for (const auto& j : v) out.push_back(j.value());
  return out;
}

inline Matrix<double> outer_sum(const Matrix<double>& a, const std::vector<double>& u) {
  Matrix<double> out = a;
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < u.size(); ++j) out(i, j) += u[i] * u[j];
  return out;
}

}  // namespace detail

/// Obstruction to phi staying concurrent for F^:
/// O^i_j = [df1/dy^j - phi^k d2f2/dy^k dy^j] phi^i - (phi^k df1/dy^k) delta^i_j
///         + (phi^k d2f1/dy^k dy^j) y^i.
inline Matrix<double> obstruction_from(const ChangeTerms<Jet>& t, std::span<const double> y) {
  const std::size_t n = y.size();
  const auto yv = [n](std::size_t k) { return static_cast<int>(n + k); };
  std::vector<Jet> d1;
  std::vector<Jet> d2;
  for (std::size_t k = 0; k < n; ++k) {
    d1.push_back(t.f1.d(yv(k)));
    d2.push_back(t.f2.d(yv(k)));
  }
  double phi_df1 = 0.0;
  for (std::size_t k = 0; k < n; ++k) phi_df1 += t.phi[k].value() * d1[k].value();
  Matrix<double> O(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double phi_dd2 = 0.0;
    double phi_dd1 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      phi_dd2 += t.phi[k].value() * d2[k].d(yv(j)).value();
      phi_dd1 += t.phi[k].value() * d1[k].d(yv(j)).value();
    }
    for (std::size_t i = 0; i < n; ++i) {
      O(i, j) = (d1[j].value() - phi_dd2) * t.phi[i].value() + phi_dd1 * y[i];
      if (i == j) O(i, j) -= phi_df1;
    }
  }
  return O;
}

/// Predicted and (optionally) direct objects of the change at one sample.
/// Throws DomainEscape, SingularMetric, OutsideHatDomain or DegenerateMargin.
inline ChangeSample evaluate_change(const ModelFunction& base, const TangentSample& s, int orientation,
                                    double margin_epsilon = kDefaultMarginEpsilon, bool with_direct = true) {
  check_orientation(orientation);
  const std::size_t n = base.dim();
  const JetGeometry geo = detail::checked_geometry(base, s, kFullOrder);
  const ChangeTerms<Jet> t = change_terms(base, geo, orientation);

  ChangeSample out;
  out.scalars = scalars_of(t, s.y, orientation);
  check_hat_domain(out.scalars, margin_epsilon);
  out.base = metric_data_from(geo);
  out.base_connection = connection_data_from(geo);
  const ChangeScalars& c = out.scalars;

  const auto yv = [n](std::size_t k) { return static_cast<int>(n + k); };
  std::vector<Jet> yj;
  for (std::size_t k = 0; k < n; ++k) yj.push_back(geo.y(k));

  // predicted, as jets where derivatives are needed
  const auto ell_hat = predicted_supporting_form<Jet>(t.F, t.Phi, geo.ell, t.phi_low);
  const Matrix<Jet> g_hat = predicted_metric<Jet>(t.F, t.Phi, geo.g, geo.ell, t.phi_low);
  Matrix<Jet> hbar(n, n, constant_like(t.F, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) hbar(i, j) = geo.g(i, j) - geo.ell[i] * geo.ell[j];
  const Matrix<Jet> hbar_hat = predicted_angular<Jet>(t.F, t.Phi, hbar, geo.ell, t.phi_low);
  Tensor3<double> cartan_hat(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) cartan_hat(i, j, k) = 0.5 * g_hat(i, j).d(yv(k)).value();
  const auto spray_hat = predicted_spray<Jet, Jet>(t.f1, t.f2, geo.spray, yj, t.phi);
  const Matrix<Jet> N_hat = predicted_connection_jets(geo.N, t, yj);

  out.ell_hat = detail::value_vector(ell_hat);
  out.g_hat = values(g_hat);
  out.hbar_hat = values(hbar_hat);
  out.cartan_hat = cartan_hat;
  out.spray_hat = detail::value_vector(spray_hat);
  out.connection_hat = values(N_hat);
  out.berwald_hat = values(vertical_jacobian(N_hat, n));
  out.curvature_hat = values(curvature_of(N_hat, n));
  out.obstruction = obstruction_from(t, s.y);

  // lemma identities, all on F
  {
    const double F = c.F;
    std::vector<SamplePair> L(lemma_identities().size());
    std::vector<double> dPhi, hPhi, Fl, hF, dp2, chain1, chain1_pred, chain2, chain2_pred;
    double along = 0.0;
    const ScalarPartials sp = scalar_partials(c.F, c.Phi, c.p2);
    for (std::size_t j = 0; j < n; ++j) {
      dPhi.push_back(t.Phi.d(yv(j)).value());
      hPhi.push_back(horizontal_derivative(t.Phi, j, geo.N, n).value());
      Fl.push_back(-F * geo.ell[j].value());
      hF.push_back(horizontal_derivative(geo.f(), j, geo.N, n).value() / F);
      dp2.push_back(t.p2.d(yv(j)).value());
      along += s.y[j] * t.Phi.d(static_cast<int>(j)).value() - 2.0 * geo.spray[j].value() * dPhi.back();
      const double lj = geo.ell[j].value();
      const double pj = c.phi_low[j];
      chain1.push_back(t.f1.d(yv(j)).value());
      chain1_pred.push_back(sp.df1_dF * lj + sp.df1_dPhi * pj);
      chain2.push_back(t.f2.d(yv(j)).value());
      chain2_pred.push_back(sp.df2_dF * lj + sp.df2_dPhi * pj);
    }
    std::vector<double> Fdl;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) Fdl.push_back(F * geo.ell[i].d(yv(j)).value());
    double phi_y = 0.0;
    double phi_phi = 0.0;
    double ell_phi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      phi_y += c.phi_low[i] * s.y[i];
      phi_phi += c.phi_low[i] * c.phi[i];
      ell_phi += out.base.ell[i] * c.phi[i];
    }
    L[0] = {0, c.phi_low, dPhi};
    L[1] = {0, Fl, hPhi};
    L[2] = {0, {-F * F}, {along}};
    L[3] = {0, std::vector<double>(n, 0.0), hF};
    L[4] = {0, out.base.hbar.data(), Fdl};
    L[5] = {0, std::vector<double>(n, 0.0), dp2};
    L[6] = {0, chain1_pred, chain1};
    L[7] = {0, chain2_pred, chain2};
    L[8] = {0, {phi_y, phi_phi, ell_phi}, {c.Phi, c.p2, c.Phi / F}};
    out.lemma = std::move(L);
  }

  // internal consistency of the predictions
  std::vector<SamplePair> C(change_identities().size());
  {
    double ly = 0.0;
    double gyy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ly += out.ell_hat[i] * s.y[i];
      for (std::size_t j = 0; j < n; ++j) gyy += out.g_hat(i, j) * s.y[i] * s.y[j];
    }
    C[8] = {0, {ly, gyy}, {c.Fhat, c.Fhat * c.Fhat}};
    C[9] = {0, detail::outer_sum(out.hbar_hat, out.ell_hat).data(), out.g_hat.data()};
    C[10] = {0, out.connection_hat.data(), values(vertical_jacobian(spray_hat, n)).data()};
  }

  if (with_direct) {
    const ChangedFunction hat(base, orientation, margin_epsilon);
    if (!hat.contains(coordinates(s.x, s.y))) throw OutsideHatDomain("sample outside the domain of F^");
    const JetGeometry hgeo = build_geometry(hat, s.x, s.y, kFullOrder);
    out.direct = metric_data_from(hgeo);
    out.direct_connection = connection_data_from(hgeo);
    out.has_direct = true;

    const Jet Fhat_base = geo.f2() / (t.F - t.Phi);
    std::vector<double> dFhat;
    for (std::size_t k = 0; k < n; ++k) dFhat.push_back(Fhat_base.d(yv(k)).value());

    C[0] = {0, out.ell_hat, out.direct.ell};
    C[1] = {0, out.hbar_hat.data(), out.direct.hbar.data()};
    C[2] = {0, out.g_hat.data(), out.direct.g.data()};
    C[3] = {0, out.cartan_hat.data(), out.direct.cartanC.data()};
    C[4] = {0, out.spray_hat, out.direct_connection.sprayG};
    C[5] = {0, out.connection_hat.data(), out.direct_connection.N.data()};
    C[6] = {0, out.berwald_hat.data(), out.direct_connection.berwald.data()};
    C[7] = {0, out.curvature_hat.data(), out.direct_connection.curvR.data()};
    C[11] = {0, dFhat, out.direct.ell};

    // O = 2 phi^k (G^ - G)^i_jk - 2 (phi^k df1/dy^k) I with the direct Berwald of F^
    double phi_df1 = 0.0;
    for (std::size_t k = 0; k < n; ++k) phi_df1 += c.phi[k] * t.f1.d(yv(k)).value();
    Matrix<double> viaB(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          sum += c.phi[k] * (out.direct_connection.berwald(i, j, k) - out.base_connection.berwald(i, j, k));
        }
        viaB(i, j) = 2.0 * sum - (i == j ? 2.0 * phi_df1 : 0.0);
      }
    out.obstruction_berwald = {0, out.obstruction.data(), viaB.data()};
  }
  out.change = std::move(C);
  return out;
}

inline ChangeSample evaluate_change(const ModelDef& model, const TangentSample& s, int orientation,
                                    double margin_epsilon = kDefaultMarginEpsilon) {
  return evaluate_change(ModelFunction(model), s, orientation, margin_epsilon);
}

/// T^_ijk = 1/2 d(predicted g^_ij)/dy^k.
inline Tensor3<double> predicted_cartan(const ModelDef& model, const TangentSample& s, int orientation) {
  return evaluate_change(ModelFunction(model), s, orientation, kDefaultMarginEpsilon, false).cartan_hat;
}

inline Matrix<double> predicted_nonlinear_connection(const ModelDef& model, const TangentSample& s,
                                                     int orientation) {
  return evaluate_change(ModelFunction(model), s, orientation, kDefaultMarginEpsilon, false).connection_hat;
}

/// Berwald coefficients dN^/dy and curvature of the predicted N^.
inline std::pair<Tensor3<double>, Tensor3<double>> predicted_berwald_and_curvature(const ModelDef& model,
                                                                                   const TangentSample& s,
                                                                                   int orientation) {
  auto e = evaluate_change(ModelFunction(model), s, orientation, kDefaultMarginEpsilon, false);
  return {e.berwald_hat, e.curvature_hat};
}

/// f2 at arbitrary coordinates, for the finite-difference oracle.
inline double f2_value(const ModelFunction& base, std::span<const double> coords, int orientation) {
  const std::size_t n = base.dim();
  const auto jets = lift(coords.subspan(0, n), coords.subspan(n, n), 2);
  const Jet f2 = base.squared(jets);
  const auto phi = base.phi(jets);
  const double F = std::sqrt(f2.value());
  const double Phi = support_value(f2, phi, orientation, n).value();
  double p2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p2 += 0.5 * f2.d(static_cast<int>(n + i)).d(static_cast<int>(n + j)).value() * phi[i].value() *
            phi[j].value();
  return 2.0 * F * F * F / (F * (1.0 + 2.0 * p2) - 3.0 * Phi);
}

struct ObstructionReport {
  Matrix<double> O;
  double norm = 0.0;       // max |O^i_j|
  double fd_residual = 0.0;  // d2f2/dy dy, jets vs central differences
};

inline ObstructionReport concurrency_obstruction(const ModelDef& model, const TangentSample& s, int orientation,
                                                 const DiffConfig& cfg = {}) {
  const ModelFunction base(model);
  const std::size_t n = base.dim();
  const JetGeometry geo = detail::checked_geometry(base, s, kFullOrder);
  const ChangeTerms<Jet> t = change_terms(base, geo, orientation);
  check_hat_domain(scalars_of(t, s.y, orientation));
  ObstructionReport r;
  r.O = obstruction_from(t, s.y);
  r.norm = max_abs(r.O.data());

  const ChangedFunction hat(base, orientation);
  const ScalarField field = [&](std::span<const double> c) { return f2_value(base, c, orientation); };
  const DomainTest inside = [&](std::span<const double> c) { return hat.contains(c); };
  const auto point = coordinates(s.x, s.y);
  SamplePair p;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      MultiIndex a(2 * n, 0);
      a[n + j] += 1;
      a[n + k] += 1;
      p.predicted.push_back(fd_derivative(field, point, a, cfg, inside));
      p.direct.push_back(t.f2.d(static_cast<int>(n + j)).d(static_cast<int>(n + k)).value());
    }
  r.fd_residual = pair_residual(p);
  return r;
}

// Non-degeneracy.

/// det of the Hessian of F^2/2 for F^, without inversion; 0 when LU finds a zero pivot.
inline double hat_metric_determinant(const ChangedFunction& hat, std::span<const double> x, std::span<const double> y,
                                     double* scale = nullptr) {
  const std::size_t n = hat.dim();
  const auto coords = lift(x, y, 2 + hat.order_loss());
  const Jet f2 = hat.squared(coords);
  Matrix<double> g(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      g(i, j) = 0.5 * f2.d(static_cast<int>(n + i)).d(static_cast<int>(n + j)).value();
  if (scale) *scale = determinant_scale(g);
  try {
    return LU<double>(g).determinant();
  } catch (const SingularMetric&) {
    return 0.0;
  }
}

struct NondegeneracyPoint {
  std::size_t sample = 0;
  double margin_ratio = 0.0;  // margin / F
  double det = 0.0;
  double scale = 0.0;
};

struct NondegeneracyScan {
  std::vector<NondegeneracyPoint> points;
  std::vector<std::size_t> violations;  // |margin| > 0.1 F but |det| < 1e-10 scale
  std::vector<std::size_t> suspicious;  // |margin| < 1e-6 F but |det| > 1e-3 scale
  std::size_t excluded = 0;
};

inline NondegeneracyScan nondegeneracy_scan(const ModelDef& model, std::span<const TangentSample> batch,
                                            int orientation) {
  check_orientation(orientation);
  const ModelFunction base(model);
  const ChangedFunction hat(base, orientation, 0.0);
  NondegeneracyScan scan;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    try {
      const JetGeometry geo = detail::checked_geometry(base, s, 2);
      const ChangeScalars c = scalars_of(change_terms(base, geo, orientation), s.y, orientation);
      if (!(c.F - c.Phi > kHatDomainTolerance * c.F)) throw OutsideHatDomain("F - Phi <= 0");
      NondegeneracyPoint p;
      p.sample = b;
      p.margin_ratio = c.margin / c.F;
      p.det = hat_metric_determinant(hat, s.x, s.y, &p.scale);
      if (std::abs(p.margin_ratio) > 0.1 && std::abs(p.det) < 1e-10 * p.scale) scan.violations.push_back(b);
      if (std::abs(p.margin_ratio) < 1e-6 && std::abs(p.det) > 1e-3 * p.scale) scan.suspicious.push_back(b);
      scan.points.push_back(p);
    } catch (const Error&) {
      ++scan.excluded;
    }
  }
  return scan;
}

/// A ray y(theta) = cos(theta) e_i + sin(theta) e_j at fixed x.
struct Ray {
  std::vector<double> x;
  std::size_t i = 0;
  std::size_t j = 1;

  std::vector<double> direction(double theta) const {
    std::vector<double> y(x.size(), 0.0);
    y[i] = std::cos(theta);
    y[j] = std::sin(theta);
    return y;
  }
};

/// margin / F along the ray; NaN outside the base domain or where F <= Phi.
inline double margin_on_ray(const ModelFunction& base, int orientation, const Ray& ray, double theta) {
  const auto y = ray.direction(theta);
  const auto c = coordinates(ray.x, y);
  if (!base.contains(c)) return std::numeric_limits<double>::quiet_NaN();
  try {
    const std::size_t n = base.dim();
    const auto jets = lift(ray.x, y, 2);
    const Jet f2 = base.squared(jets);
    const auto raw = base.phi(jets);
    const double F = std::sqrt(f2.value());
    const double Phi = support_value(f2, raw, orientation, n).value();
    if (!(F - Phi > kHatDomainTolerance * F)) return std::numeric_limits<double>::quiet_NaN();
    double p2 = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        p2 += 0.5 * f2.d(static_cast<int>(n + i)).d(static_cast<int>(n + j)).value() * raw[i].value() *
              raw[j].value();
    return (F * (1.0 + 2.0 * p2) - 3.0 * Phi) / F;
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

inline double determinant_on_ray(const ModelFunction& base, int orientation, const Ray& ray, double theta) {
  const ChangedFunction hat(base, orientation, 0.0);
  const auto y = ray.direction(theta);
  return hat_metric_determinant(hat, ray.x, y);
}

struct RayReport {
  bool found = false;
  double theta_root = std::numeric_limits<double>::quiet_NaN();
  int side = 1;  // sign of d(margin)/d(theta) at the root
  double theta_large = std::numeric_limits<double>::quiet_NaN();
  double theta_small = std::numeric_limits<double>::quiet_NaN();
  double det_large = std::numeric_limits<double>::quiet_NaN();
  double det_small = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();  // |det_small| / |det_large|
  bool monotone = false;  // |det| decreases over the last decade of margin
  std::vector<std::pair<double, double>> decade;  // (margin / F, |det|)
  std::string note;
};

inline double solve_bracket(const std::function<double(double)>& f, double a, double b) {
  std::uintmax_t iterations = 200;
  const auto [lo, hi] =
      boost::math::tools::toms748_solve(f, a, b, boost::math::tools::eps_tolerance<double>(52), iterations);
  return 0.5 * (lo + hi);
}

/// Finds margin = 0 on the ray and compares det g^ at margin/F = small and large.
inline RayReport nondegeneracy_ray(const ModelDef& model, int orientation, const Ray& ray, double small = 1e-6,
                                   double large = 0.5, int scan_points = 720) {
  check_orientation(orientation);
  if (ray.x.size() != model.n() || ray.i >= model.n() || ray.j >= model.n() || ray.i == ray.j) {
    throw PreconditionError("nondegeneracy_ray: bad ray for this model");
  }
  const ModelFunction base(model);
  const auto m = [&](double th) { return margin_on_ray(base, orientation, ray, th); };
  RayReport r;
  const double two_pi = 2.0 * std::acos(-1.0);
  double prev_t = 0.0;
  double prev_m = m(0.0);
  for (int k = 1; k <= scan_points && !r.found; ++k) {
    const double t = two_pi * k / scan_points;
    const double v = m(t);
    if (std::isfinite(prev_m) && std::isfinite(v) && ((prev_m < 0.0) != (v < 0.0))) {
      r.theta_root = solve_bracket(m, prev_t, t);
      r.side = v > prev_m ? 1 : -1;
      r.found = true;
    }
    prev_t = t;
    prev_m = v;
  }
  if (!r.found) {
    r.note = "no sign change of the margin along the ray";
    return r;
  }
  // theta on the positive side where margin / F equals target
  const auto theta_for = [&](double target) {
    double h = 1e-12;
    double inner = r.theta_root;
    for (int it = 0; it < 200; ++it) {
      const double t = r.theta_root + r.side * h;
      const double v = m(t);
      if (!std::isfinite(v)) break;
      if (v >= target) return solve_bracket([&](double th) { return m(th) - target; }, std::min(inner, t),
                                            std::max(inner, t));
      inner = t;
      h *= 2.0;
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  r.theta_large = theta_for(large);
  r.theta_small = theta_for(small);
  if (!std::isfinite(r.theta_large) || !std::isfinite(r.theta_small)) {
    r.note = "target margins not reached on the positive side of the root";
    return r;
  }
  r.det_large = determinant_on_ray(base, orientation, ray, r.theta_large);
  r.det_small = determinant_on_ray(base, orientation, ray, r.theta_small);
  r.ratio = std::abs(r.det_small) / std::abs(r.det_large);
  r.monotone = true;
  double last = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 9; ++k) {
    const double target = 10.0 * small * std::pow(10.0, -k / 9.0);
    const double th = theta_for(target);
    const double det = std::isfinite(th) ? std::abs(determinant_on_ray(base, orientation, ray, th))
                                         : std::numeric_limits<double>::quiet_NaN();
    r.decade.emplace_back(target, det);
    if (!(det < last)) r.monotone = false;
    last = det;
  }
  return r;
}

// Projective relation.

struct ProjectivePoint {
  std::size_t sample = 0;
  bool parallel = false;     // phi has no g-orthogonal part w.r.t. y at this point
  double ratio = 0.0;        // |(G^ - G) orthogonal to y| / |G^ - G|, direct sprays
  double predicted_ratio = 0.0;  // |f2 phi orthogonal to y| / |f2 phi|
};

struct ProjectiveReport {
  std::vector<ProjectivePoint> points;
  bool skipped = false;
  std::string diagnostic;
  std::size_t excluded = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  bool passed = true;
};

namespace detail {

inline std::vector<double> g_orthogonal(const Matrix<double>& g, const std::vector<double>& v,
                                        const std::vector<double>& y) {
  double gvy = 0.0;
  double gyy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) {
      gvy += g(i, j) * v[i] * y[j];
      gyy += g(i, j) * y[i] * y[j];
    }
  std::vector<double> out = v;
  for (std::size_t i = 0; i < y.size(); ++i) out[i] -= gvy / gyy * y[i];
  return out;
}

inline double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

inline ProjectiveReport projective_check(const ModelDef& model, std::span<const TangentSample> batch,
                                         int orientation, double threshold = 1e-8) {
  check_orientation(orientation);
  const ModelFunction base(model);
  const ChangedFunction hat(base, orientation);
  ProjectiveReport r;
  bool any_phi = false;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    try {
      const JetGeometry geo = detail::checked_geometry(base, s, 2);
      const ChangeScalars c = scalars_of(change_terms(base, geo, orientation), s.y, orientation);
      check_hat_domain(c);
      if (detail::norm2(c.phi) > 0.0) any_phi = true;
      const JetGeometry hgeo = detail::checked_geometry(hat, s, 2);
      const auto g = values(geo.g);
      std::vector<double> d = values(hgeo.spray);
      const auto G = values(geo.spray);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= G[i];
      ProjectivePoint p;
      p.sample = b;
      const auto phi_perp = detail::g_orthogonal(g, c.phi, s.y);
      const double phi_norm = detail::norm2(c.phi);
      p.parallel = phi_norm == 0.0 || detail::norm2(phi_perp) <= 1e-10 * phi_norm;
      const double dn = detail::norm2(d);
      p.ratio = dn > 0.0 ? detail::norm2(detail::g_orthogonal(g, d, s.y)) / dn : 0.0;
      p.predicted_ratio = phi_norm > 0.0 ? detail::norm2(phi_perp) / phi_norm : 0.0;
      if (!p.parallel) {
        r.min_ratio = std::min(r.min_ratio, p.ratio);
        if (!(p.ratio > threshold)) r.passed = false;
      }
      r.points.push_back(p);
    } catch (const Error&) {
      ++r.excluded;
    }
  }
  if (!any_phi) {
    r.skipped = true;
    r.passed = true;
    r.diagnostic = "concurrent field required nonvanishing";
  }
  return r;
}

// Rational decompositions of the shipped example.

struct RationalSample {
  SamplePair base;              // theta a vs g
  SamplePair changed;           // F^2/(F-Phi)^4 a^ (a := g) vs g^
  SamplePair changed_general;   // theta F^2/(F-Phi)^4 a^ (example a) vs g^
};

/// a^ for a decomposition g = theta a; with theta = 1 and a = g this is the
/// companion of theta^ = F^2 / (F - Phi)^4.
inline Matrix<double> changed_rational_factor(const Matrix<double>& a, const std::vector<double>& y,
                                              const std::vector<double>& phi_low, double F, double Phi) {
  const std::size_t n = y.size();
  std::vector<double> ay(n, 0.0);
  double ayy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) ay[i] += a(i, j) * y[j];
    ayy += ay[i] * y[i];
  }
  Matrix<double> out(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double ll = ay[i] * ay[j] / ayy;
      const double pl = phi_low[i] * ay[j] + phi_low[j] * ay[i];
      out(i, j) = (F * F + 2.0 * Phi * Phi) * a(i, j) + 3.0 * ayy * phi_low[i] * phi_low[j] + 4.0 * Phi * Phi * ll -
                  4.0 * Phi * pl - F * Phi * (3.0 * a(i, j) + ll) + F * pl;
    }
  return out;
}

inline RationalSample rational_sample(const ModelDef& model, const TangentSample& s, int orientation) {
  if (!is_matsumoto_example(model)) {
    throw PreconditionError("rational decomposition is only stated for the shipped example");
  }
  const ModelFunction base(model);
  const JetGeometry geo = detail::checked_geometry(base, s, 2);
  const ChangeScalars c = scalars_of(change_terms(base, geo, orientation), s.y, orientation);
  check_hat_domain(c);
  const ChangedFunction hat(base, orientation);
  const auto g = values(geo.g);
  const JetGeometry hgeo = detail::checked_geometry(hat, s, 2);
  const auto ghat = values(hgeo.g);
  const double theta = example::theta(s.x, s.y);
  const auto a = example::a(s.x, s.y);
  const double d = c.F - c.Phi;
  const double theta_hat = c.F * c.F / (d * d * d * d);

  RationalSample r;
  std::vector<double> ta;
  for (double v : a.data()) ta.push_back(theta * v);
  r.base = {0, ta, g.data()};
  const Matrix<double> a1 = changed_rational_factor(g, s.y, c.phi_low, c.F, c.Phi);
  std::vector<double> th1;
  for (double v : a1.data()) th1.push_back(theta_hat * v);
  r.changed = {0, th1, ghat.data()};
  const Matrix<double> a2 = changed_rational_factor(a, s.y, c.phi_low, c.F, c.Phi);
  std::vector<double> th2;
  for (double v : a2.data()) th2.push_back(theta * theta_hat * v);
  r.changed_general = {0, th2, ghat.data()};
  return r;
}

inline IdentityReport rational_decomposition_check(const ModelDef& model, std::span<const TangentSample> batch,
                                                   int orientation) {
  IdentityReport rep;
  rep.model = model.name;
  rep.orientation = orientation;
  rep.n_samples = batch.size();
  IdentityEntry base("rational", "rational.metric", "g = theta a, theta = (x3/y1)^2", 1e-9);
  IdentityEntry changed("rational", "rational.changed_metric", "g^ = theta^ a^, theta^ = F^2/(F-Phi)^4, a := g",
                        1e-9);
  IdentityEntry general("rational", "rational.changed_metric_general",
                        "g^ = theta^ a^, theta^ = theta F^2/(F-Phi)^4, a from g = theta a", 1e-9);
  std::size_t excluded = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    try {
      auto r = rational_sample(model, batch[b], orientation);
      base.add(b, r.base.predicted, r.base.direct);
      changed.add(b, r.changed.predicted, r.changed.direct);
      general.add(b, r.changed_general.predicted, r.changed_general.direct);
    } catch (const PreconditionError&) {
      throw;
    } catch (const Error&) {
      ++excluded;
    }
  }
  for (auto* e : {&base, &changed, &general}) {
    if (excluded) e->note = std::to_string(excluded) + " samples outside the changed domain";
    e->finalize();
    rep.identities.push_back(*e);
  }
  return rep;
}

// Suites over a batch.

struct ChangeSuiteResult {
  IdentityReport report;
  std::vector<ChangeSample> samples;  // successful evaluations, in batch order
  std::vector<std::size_t> indices;   // their batch indices
  std::size_t excluded = 0;
};

/// Lemma, change and obstruction identities over a batch, in parallel.
inline ChangeSuiteResult change_suite(const ModelDef& model, std::span<const TangentSample> batch, int orientation,
                                      double margin_epsilon = kDefaultMarginEpsilon, bool with_direct = true) {
  check_orientation(orientation);
  const ModelFunction base(model);
  std::vector<std::optional<ChangeSample>> slots(batch.size());
  parallel_for(batch.size(), [&](std::size_t b) {
    try {
      slots[b] = evaluate_change(base, batch[b], orientation, margin_epsilon, with_direct);
    } catch (const Error&) {
      slots[b].reset();
    }
  });

  ChangeSuiteResult out;
  out.report.model = model.name;
  out.report.orientation = orientation;
  out.report.n_samples = batch.size();
  std::vector<IdentityEntry> lemma;
  for (const auto& s : lemma_identities()) lemma.emplace_back("lemma", s.name, s.anchor, s.tolerance);
  std::vector<IdentityEntry> change;
  for (const auto& s : change_identities()) change.emplace_back("change", s.name, s.anchor, s.tolerance);
  IdentityEntry obstruction("obstruction", "obstruction.norm",
                            "O^i_j = [df1/dy^j - phi^k d2f2/dy^k dy^j] phi^i - (phi^k df1/dy^k) delta^i_j + "
                            "(phi^k d2f1/dy^k dy^j) y^i (nonzero: phi not concurrent for F^)",
                            0.0, Check::Info);
  IdentityEntry obstruction_b("obstruction", "obstruction.berwald_form",
                              "O = 2 phi^k (G^ - G)^i_jk - 2 (phi^k df1/dy^k) I", 1e-6);

  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!slots[b]) {
      ++out.excluded;
      continue;
    }
    ChangeSample& cs = *slots[b];
    for (std::size_t k = 0; k < lemma.size(); ++k) {
      lemma[k].add(b, cs.lemma[k].predicted, cs.lemma[k].direct);
    }
    for (std::size_t k = 0; k < change.size(); ++k) {
      if (!cs.change[k].direct.empty() || !cs.change[k].predicted.empty()) {
        change[k].add(b, cs.change[k].predicted, cs.change[k].direct);
      }
    }
    obstruction.add_value(b, max_abs(cs.obstruction.data()));
    if (cs.has_direct) obstruction_b.add(b, cs.obstruction_berwald.predicted, cs.obstruction_berwald.direct);
    out.samples.push_back(std::move(cs));
    out.indices.push_back(b);
  }
  const std::string note =
      out.excluded ? std::to_string(out.excluded) + " samples excluded (outside the changed domain or degenerate)"
                   : std::string();
  for (auto& e : lemma) {
    e.note = note;
    e.finalize();
    out.report.identities.push_back(std::move(e));
  }
  for (auto& e : change) {
    if (!with_direct && e.pairs.empty()) e.skipped = true;
    e.note = e.skipped ? "direct recomputation disabled" : note;
    e.finalize();
    out.report.identities.push_back(std::move(e));
  }
  obstruction.finalize();
  out.report.identities.push_back(std::move(obstruction));
  if (with_direct) {
    obstruction_b.finalize();
    out.report.identities.push_back(std::move(obstruction_b));
  }
  return out;
}

inline IdentityReport lemma_identity_suite(const ModelDef& model, std::span<const TangentSample> batch,
                                           int orientation) {
  auto result = change_suite(model, batch, orientation, kDefaultMarginEpsilon, false);
  IdentityReport rep;
  rep.model = result.report.model;
  rep.orientation = orientation;
  rep.n_samples = result.report.n_samples;
  for (auto& e : result.report.identities) {
    if (e.suite == "lemma") rep.identities.push_back(std::move(e));
  }
  return rep;
}

}  // namespace finslerlab
