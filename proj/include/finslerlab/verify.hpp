#pragma once

// The verification harness: draws seeded batches, runs every suite and
// assembles one report. Orientation of the change is chosen per model by the
// smaller total change-suite residual unless forced.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "finslerlab/connections.hpp"
#include "finslerlab/core.hpp"
#include "finslerlab/finite_difference.hpp"
#include "finslerlab/matsumoto.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/report.hpp"
#include "finslerlab/sampling.hpp"

namespace finslerlab {

struct VerifyConfig {
  std::size_t samples = 100;
  std::uint64_t seed = 42;
  Box box;
  int orientation = 0;  // 0 selects automatically
  std::map<std::string, double> tolerances;
  std::size_t numeric_samples = 20;
  std::size_t rational_samples = 30;
  std::size_t trajectories = 5;
  double t_end = 1.0;
  double step = 1e-3;
  std::optional<std::vector<double>> ray_x;
  unsigned threads = 0;
};

struct OrientationRow {
  std::string name;
  double residual_plus = 0.0;
  double residual_minus = 0.0;
  bool passed_plus = false;
  bool passed_minus = false;
};

struct VerifyResult {
  IdentityReport report;
  std::uint64_t seed = 0;
  std::string orientation_mode;
  double total_plus = 0.0;
  double total_minus = 0.0;
  double sigma = 0.0;
  std::vector<OrientationRow> comparison;
  std::map<std::string, std::pair<std::size_t, std::size_t>> sampling;  // suite -> (drawn, rejected)

  bool passed() const { return report.passed(); }
};

namespace detail {

inline std::vector<double> zeros(std::size_t n) { return std::vector<double>(n, 0.0); }

inline double tolerance_for(const VerifyConfig& cfg, const std::string& name, double fallback) {
  auto it = cfg.tolerances.find(name);
  return it == cfg.tolerances.end() ? fallback : it->second;
}

inline void apply_overrides(IdentityReport& rep, const VerifyConfig& cfg) {
  for (auto& e : rep.identities) {
    const double t = tolerance_for(cfg, e.name, e.tolerance);
    if (t != e.tolerance) {
      e.tolerance = t;
      e.finalize();
    }
  }
}

inline std::string excluded_note(std::size_t excluded, const std::string& why) {
  return excluded ? std::to_string(excluded) + " samples excluded (" + why + ")" : std::string();
}

// Core identities of one sample, in the order of core_specs().
struct CoreSample {
  std::vector<SamplePair> pairs;
  double det_ratio = 0.0;
  Matrix<double> hcov;
  Matrix<double> vcov;
  double trace = 0.0;
};

struct CoreSpec {
  const char* suite;
  const char* name;
  const char* anchor;
  double tolerance;
};

inline const std::vector<CoreSpec>& core_specs() {
  static const std::vector<CoreSpec> specs = {
      {"core", "core.homogeneity", "F(x, l y) = l F(x, y), g degree 0, C degree -1 (l = 0.5, 2, 3)", 1e-9},
      {"core", "core.inverse", "g_ij g^jk = delta_i^k", 1e-9},
      {"core", "core.supporting_form", "l_i = dF/dy^i = g_ij y^j / F", 1e-10},
      {"core", "core.angular_kernel", "h_ij y^j = 0, h = g - l l", 1e-9},
      {"core", "core.cartan_symmetry", "C_ijk totally symmetric", 1e-10},
      {"core", "core.cartan_kernel", "C_ijk y^k = 0", 1e-9},
      {"connections", "connections.spray_system",
       "4 g_il G^l = y^k d2F^2/dy^i dx^k - dF^2/dx^i", 1e-9},
      {"connections", "connections.spray_homogeneity", "N^i_j y^j = 2 G^i", 1e-9},
      {"connections", "connections.spray_degree", "G(x, 2y) = 4 G(x, y)", 1e-9},
      {"connections", "connections.berwald_homogeneity", "G^i_jk y^k = N^i_j", 1e-9},
      {"connections", "connections.berwald_symmetry", "G^i_jk = G^i_kj", 1e-10},
      {"connections", "connections.curvature_antisymmetry", "R^i_jk = -R^i_kj", 1e-10},
      {"connections", "connections.cartan_compatibility",
       "delta_k g_ij = Gamma^l_ik g_lj + Gamma^l_jk g_il", 1e-8},
  };
  return specs;
}

inline std::vector<double> permuted(const Tensor3<double>& t, int perm) {
  const std::size_t n = t.dim();
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        switch (perm) {
          case 0: out.push_back(t(i, k, j)); break;
          case 1: out.push_back(t(j, i, k)); break;
          case 2: out.push_back(t(j, k, i)); break;
          case 3: out.push_back(t(k, i, j)); break;
          default: out.push_back(t(k, j, i)); break;
        }
      }
  return out;
}

inline CoreSample core_sample(const ModelFunction& f, const TangentSample& s) {
  const std::size_t n = f.dim();
  CoreSample out;
  const HomogeneityReport hom = homogeneity_report(f, s);
  std::vector<double> hres;
  for (const auto& r : hom.residuals) hres.insert(hres.end(), {r.F, r.g, r.C});
  out.pairs.push_back({0, hres, zeros(hres.size())});

  const JetGeometry geo = checked_geometry(f, s, kFullOrder);
  const MetricData m = metric_data_from(geo);
  const ConnectionData c = connection_data_from(geo);

  std::vector<double> prod;
  std::vector<double> eye;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      double v = 0.0;
      for (std::size_t j = 0; j < n; ++j) v += m.g(i, j) * m.ginv(j, k);
      prod.push_back(v);
      eye.push_back(i == k ? 1.0 : 0.0);
    }
  out.pairs.push_back({0, prod, eye});

  std::vector<double> ell_from_g(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) ell_from_g[i] += m.g(i, j) * s.y[j];
    ell_from_g[i] /= m.F;
  }
  std::vector<double> ell_direct;
  for (const auto& e : geo.ell) ell_direct.push_back(e.value());
  out.pairs.push_back({0, ell_from_g, ell_direct});

  const double ynorm = max_abs(s.y);
  std::vector<double> hy(n, 0.0);
  const double hscale = std::max(max_abs(m.hbar.data()), 1e-300) * ynorm;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) hy[i] += m.hbar(i, j) * s.y[j];
    hy[i] /= hscale;
  }
  out.pairs.push_back({0, hy, zeros(n)});

  std::vector<double> csym;
  std::vector<double> cref;
  for (int p = 0; p < 5; ++p) {
    const auto v = permuted(m.cartanC, p);
    csym.insert(csym.end(), v.begin(), v.end());
    cref.insert(cref.end(), m.cartanC.data().begin(), m.cartanC.data().end());
  }
  out.pairs.push_back({0, csym, cref});

  std::vector<double> cy(n * n, 0.0);
  const double cscale = std::max(1.0, max_abs(m.cartanC.data()) * ynorm);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) cy[i * n + j] += m.cartanC(i, j, k) * s.y[k];
      cy[i * n + j] /= cscale;
    }
  out.pairs.push_back({0, cy, zeros(n * n)});

  std::vector<double> lhs(n, 0.0);
  std::vector<double> rhs(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < n; ++l) lhs[i] += 4.0 * m.g(i, l) * c.sprayG[l];
    const Jet di = geo.f2().d(geo.yv(i));
    for (std::size_t k = 0; k < n; ++k) rhs[i] += s.y[k] * di.d(geo.xv(k)).value();
    rhs[i] -= geo.f2().d(geo.xv(i)).value();
  }
  out.pairs.push_back({0, lhs, rhs});

  std::vector<double> ny(n, 0.0);
  std::vector<double> twoG(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) ny[i] += c.N(i, j) * s.y[j];
    twoG[i] = 2.0 * c.sprayG[i];
  }
  out.pairs.push_back({0, ny, twoG});

  std::vector<double> y2 = s.y;
  for (double& v : y2) v *= 2.0;
  const auto G2 = values(build_geometry(f, s.x, y2, 2).spray);
  std::vector<double> fourG;
  for (double v : c.sprayG) fourG.push_back(4.0 * v);
  out.pairs.push_back({0, fourG, G2});

  std::vector<double> by;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += c.berwald(i, j, k) * s.y[k];
      by.push_back(v);
    }
  out.pairs.push_back({0, by, c.N.data()});

  std::vector<double> bsw;
  std::vector<double> rsw;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        bsw.push_back(c.berwald(i, k, j));
        rsw.push_back(-c.curvR(i, k, j));
      }
  out.pairs.push_back({0, bsw, c.berwald.data()});
  out.pairs.push_back({0, rsw, c.curvR.data()});

  std::vector<double> pred;
  std::vector<double> dg;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        dg.push_back(horizontal_derivative(geo.g(i, j), k, geo.N, n).value());
        double v = 0.0;
        for (std::size_t l = 0; l < n; ++l) v += c.cartanGamma(l, i, k) * m.g(l, j) + c.cartanGamma(l, j, k) * m.g(i, l);
        pred.push_back(v);
      }
  out.pairs.push_back({0, pred, dg});

  out.det_ratio = std::abs(m.det) / determinant_scale(m.g);
  auto [h, v] = covariant_phi(f, geo);
  for (std::size_t i = 0; i < n; ++i) out.trace += h(i, i);
  out.hcov = std::move(h);
  out.vcov = std::move(v);
  return out;
}

}  // namespace detail

/// Homogeneity, metric and connection identities plus the concurrency probe.
inline IdentityReport core_suite(const ModelDef& model, std::span<const TangentSample> batch, double* sigma_out = nullptr,
                                 unsigned threads = 0) {
  const ModelFunction f(model);
  const std::size_t n = model.n();
  std::vector<std::optional<detail::CoreSample>> slots(batch.size());
  std::vector<std::string> errors(batch.size());
  parallel_for(
      batch.size(),
      [&](std::size_t b) {
        try {
          slots[b] = detail::core_sample(f, batch[b]);
        } catch (const Error& e) {
          errors[b] = e.what();
        }
      },
      threads);

  IdentityReport rep;
  rep.model = model.name;
  rep.n_samples = batch.size();
  std::vector<IdentityEntry> entries;
  for (const auto& s : detail::core_specs()) entries.emplace_back(s.suite, s.name, s.anchor, s.tolerance);
  IdentityEntry det("core", "core.determinant", "|det g| / scale (signature recorded, not asserted)", 0.0, Check::Info);
  IdentityEntry hcov("concurrency", "concurrency.horizontal", "phi^i_|j = dphi^i/dx^j + phi^k Gamma^i_jk = sigma delta^i_j",
                     1e-8);
  IdentityEntry vcov("concurrency", "concurrency.vertical", "phi^k C_kij = 0", 1e-10);

  std::size_t excluded = 0;
  std::string first_error;
  double trace = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!slots[b]) {
      if (first_error.empty()) first_error = errors[b];
      ++excluded;
      continue;
    }
    trace += slots[b]->trace;
    ++used;
  }
  const double trace_mean = used ? trace / static_cast<double>(n * used) : std::numeric_limits<double>::quiet_NaN();
  const double sigma = std::isnan(trace_mean) ? trace_mean : fitted_sign(trace_mean);
  std::vector<double> sigmaI(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) sigmaI[i * n + i] = sigma;

  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!slots[b]) continue;
    const auto& cs = *slots[b];
    for (std::size_t k = 0; k < entries.size(); ++k) {
      entries[k].add(b, cs.pairs[k].predicted, cs.pairs[k].direct);
    }
    det.add_value(b, cs.det_ratio);
    hcov.add(b, sigmaI, cs.hcov.data());
    vcov.add(b, detail::zeros(n * n), cs.vcov.data());
  }
  const std::string note = excluded ? detail::excluded_note(excluded, first_error) : std::string();
  for (auto& e : entries) {
    e.note = note;
    e.finalize();
    rep.identities.push_back(std::move(e));
  }
  det.note = note;
  det.finalize();
  rep.identities.push_back(std::move(det));
  char buf[96];
  std::snprintf(buf, sizeof buf, "sigma = %.12g (mean trace %.12g)", sigma, trace_mean);
  hcov.note = buf;
  hcov.finalize();
  vcov.finalize();
  rep.identities.push_back(std::move(hcov));
  rep.identities.push_back(std::move(vcov));
  if (sigma_out) *sigma_out = sigma;
  return rep;
}

namespace detail {

inline std::vector<MultiIndex> multi_indices_upto(std::size_t nvars, int order) {
  std::vector<MultiIndex> out;
  MultiIndex a(nvars, 0);
  const std::function<void(std::size_t, int)> rec = [&](std::size_t v, int left) {
    if (v == nvars) {
      if (degree(a) > 0) out.push_back(a);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      a[v] = k;
      rec(v + 1, left - k);
    }
    a[v] = 0;
  };
  rec(0, order);
  return out;
}

// One pair per derivative order: central differences vs jet derivatives of
// F^2 for every multi-index of that order.
inline std::vector<SamplePair> jet_vs_fd(const FinslerFunction& f, const TangentSample& s, const DiffConfig& cfg) {
  const auto point = coordinates(s.x, s.y);
  const Jet f2 = f.squared(lift(s.x, s.y, 3 + f.order_loss()));
  const ScalarField field = [&](std::span<const double> c) { return f.squared(c); };
  const DomainTest inside = [&](std::span<const double> c) { return f.contains(c); };
  std::vector<SamplePair> out(3);
  for (const auto& a : multi_indices_upto(point.size(), 3)) {
    auto& p = out[static_cast<std::size_t>(degree(a) - 1)];
    p.predicted.push_back(fd_derivative(field, point, a, cfg, inside));
    p.direct.push_back(f2.derivative(a));
  }
  return out;
}

// delta_j N^i_k from central differences of N against the jet value.
inline SamplePair horizontal_connection_fd(const FinslerFunction& f, const TangentSample& s, double h = 1e-5) {
  const std::size_t n = f.dim();
  const JetGeometry geo = checked_geometry(f, s, kFullOrder);
  const auto N = values(geo.N);
  std::vector<Matrix<double>> dN;  // d N / d coordinate v, v over 2n coordinates
  for (std::size_t v = 0; v < 2 * n; ++v) {
    auto plus = coordinates(s.x, s.y);
    auto minus = plus;
    plus[v] += h;
    minus[v] -= h;
    if (!f.contains(plus) || !f.contains(minus)) throw DomainEscape("stencil outside the domain");
    const auto Np = values(build_geometry(f, std::span(plus).first(n), std::span(plus).subspan(n), 3).N);
    const auto Nm = values(build_geometry(f, std::span(minus).first(n), std::span(minus).subspan(n), 3).N);
    Matrix<double> d(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) d(i, k) = (Np(i, k) - Nm(i, k)) / (2.0 * h);
    dN.push_back(std::move(d));
  }
  SamplePair p;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k) {
        double v = dN[j](i, k);
        for (std::size_t m = 0; m < n; ++m) v -= N(m, j) * dN[n + m](i, k);
        p.predicted.push_back(v);
        p.direct.push_back(horizontal_derivative(geo.N(i, k), j, geo.N, n).value());
      }
  return p;
}

}  // namespace detail

/// Jet derivatives against finite differences, curvature and obstruction
/// cross-checks, and conservation of F along geodesics.
inline IdentityReport numerics_suite(const ModelDef& model, std::span<const TangentSample> base_batch,
                                     std::span<const TangentSample> hat_batch, int orientation, const VerifyConfig& cfg) {
  const ModelFunction f(model);
  const ChangedFunction hat(f, orientation);
  IdentityReport rep;
  rep.model = model.name;
  rep.orientation = orientation;
  rep.n_samples = base_batch.size();

  IdentityEntry fdF("numerics", "numerics.jet_vs_fd_F2", "d^a F^2 (jets) = d^a F^2 (central differences), |a| <= 3, relative per order",
                    1e-5);
  IdentityEntry fdH("numerics", "numerics.jet_vs_fd_Fhat2", "d^a F^2 (jets) = central differences for F^, |a| <= 3, relative per order",
                    1e-5);
  IdentityEntry curv("numerics", "numerics.horizontal_connection_fd",
                     "delta_j N^i_k (jets) = dN^i_k/dx^j - N^m_j dN^i_k/dy^m (central differences)", 1e-4);
  IdentityEntry obst("numerics", "numerics.obstruction_fd", "d2 f2/dy^j dy^k (jets) = central differences", 1e-4);

  DiffConfig dc;
  dc.fd_step = 1e-4;
  dc.richardson = true;
  std::vector<std::vector<SamplePair>> fd_base(base_batch.size());
  std::vector<std::vector<SamplePair>> fd_hat(hat_batch.size());
  std::vector<std::optional<SamplePair>> curv_pairs(base_batch.size());
  std::vector<std::optional<double>> obst_res(hat_batch.size());
  parallel_for(
      base_batch.size(),
      [&](std::size_t b) {
        try {
          fd_base[b] = detail::jet_vs_fd(f, base_batch[b], dc);
        } catch (const Error&) {
        }
        try {
          curv_pairs[b] = detail::horizontal_connection_fd(f, base_batch[b]);
        } catch (const Error&) {
        }
      },
      cfg.threads);
  parallel_for(
      hat_batch.size(),
      [&](std::size_t b) {
        try {
          fd_hat[b] = detail::jet_vs_fd(hat, hat_batch[b], dc);
        } catch (const Error&) {
        }
        try {
          obst_res[b] = concurrency_obstruction(model, hat_batch[b], orientation, dc).fd_residual;
        } catch (const Error&) {
        }
      },
      cfg.threads);

  std::size_t ex_base = 0, ex_hat = 0, ex_curv = 0, ex_obst = 0;
  for (std::size_t b = 0; b < base_batch.size(); ++b) {
    if (fd_base[b].empty()) ++ex_base;
    for (auto& p : fd_base[b]) fdF.add(b, p.predicted, p.direct);
    if (curv_pairs[b]) curv.add(b, curv_pairs[b]->predicted, curv_pairs[b]->direct);
    else ++ex_curv;
  }
  for (std::size_t b = 0; b < hat_batch.size(); ++b) {
    if (fd_hat[b].empty()) ++ex_hat;
    for (auto& p : fd_hat[b]) fdH.add(b, p.predicted, p.direct);
    if (obst_res[b]) obst.add(b, {*obst_res[b]}, {0.0});
    else ++ex_obst;
  }
  fdF.note = detail::excluded_note(ex_base, "stencil outside the domain");
  fdH.note = detail::excluded_note(ex_hat, "stencil outside the changed domain");
  curv.note = detail::excluded_note(ex_curv, "stencil outside the domain");
  obst.note = detail::excluded_note(ex_obst, "stencil outside the changed domain");

  // Geodesics of F and of F^ over [0, t_end].
  IdentityEntry geoF("numerics", "numerics.geodesic_F", "F constant along geodesics of F (RK4, relative drift)", 1e-6);
  IdentityEntry geoH("numerics", "numerics.geodesic_Fhat", "F^ constant along geodesics of F^ (RK4, relative drift)",
                     1e-6);
  const auto run = [&](const FinslerFunction& fn, std::span<const TangentSample> batch, IdentityEntry& e) {
    const std::size_t count = std::min(cfg.trajectories, batch.size());
    std::vector<std::optional<Trajectory>> trajs(count);
    parallel_for(
        count,
        [&](std::size_t b) {
          try {
            trajs[b] = integrate_geodesic(fn, batch[b], cfg.t_end, cfg.step);
          } catch (const Error&) {
          }
        },
        cfg.threads);
    std::size_t escaped = 0;
    for (std::size_t b = 0; b < count; ++b) {
      if (!trajs[b] || trajs[b]->escaped) {
        ++escaped;
        continue;
      }
      e.add(b, {trajs[b]->max_relative_drift()}, {0.0});
    }
    e.note = detail::excluded_note(escaped, "trajectory left the domain before t_end");
  };
  run(f, base_batch, geoF);
  run(hat, hat_batch, geoH);

  for (auto* e : {&fdF, &fdH, &curv, &obst, &geoF, &geoH}) {
    e->finalize();
    rep.identities.push_back(std::move(*e));
  }
  return rep;
}

/// Determinant scan, margin-zero ray, projective and rational checks.
inline IdentityReport theorem_suite(const ModelDef& model, std::span<const TangentSample> scan_batch,
                                    std::span<const TangentSample> change_batch, int orientation,
                                    const VerifyConfig& cfg) {
  IdentityReport rep;
  rep.model = model.name;
  rep.orientation = orientation;
  rep.n_samples = scan_batch.size();
  const std::size_t n = model.n();

  const NondegeneracyScan scan = nondegeneracy_scan(model, scan_batch, orientation);
  IdentityEntry nd("nondegeneracy", "nondegeneracy.scan",
                   "|det g^| / scale > 1e-10 wherever |F(1 + 2p^2) - 3 Phi| > 0.1 F", 1e-10, Check::Lower);
  for (const auto& p : scan.points) {
    if (std::abs(p.margin_ratio) > 0.1) nd.add_value(p.sample, std::abs(p.det) / p.scale);
  }
  nd.note = std::to_string(scan.suspicious.size()) + " near-zero-margin samples with large determinant";
  if (scan.excluded) nd.note += "; " + detail::excluded_note(scan.excluded, "outside F > Phi");
  nd.finalize();
  rep.identities.push_back(std::move(nd));

  IdentityEntry ray("nondegeneracy", "nondegeneracy.ray",
                    "|det g^| at margin/F = 1e-6 over |det g^| at margin/F = 0.5 on one ray", 1e-3);
  IdentityEntry mono("nondegeneracy", "nondegeneracy.ray_monotone",
                     "|det g^| decreases over the last decade of margin (count of increases)", 0.0);
  std::vector<std::vector<double>> candidates;
  if (cfg.ray_x) candidates.push_back(*cfg.ray_x);
  std::vector<double> axis(n, 0.0);
  axis[0] = 0.8;
  candidates.push_back(axis);
  if (!change_batch.empty()) candidates.push_back(change_batch.front().x);
  RayReport rr;
  std::vector<double> used_x;
  for (const auto& x : candidates) {
    if (x.size() != n || n < 2) continue;
    try {
      rr = nondegeneracy_ray(model, orientation, Ray{x, 0, 1});
    } catch (const Error& e) {
      rr = RayReport{};
      rr.note = e.what();
    }
    if (rr.found && std::isfinite(rr.ratio)) {
      used_x = x;
      break;
    }
  }
  if (!used_x.empty()) {
    ray.add(0, {rr.ratio}, {0.0});
    double increases = rr.monotone ? 0.0 : 1.0;
    mono.add(0, {increases}, {0.0});
    char buf[160];
    std::snprintf(buf, sizeof buf, "x = (%g, %g%s), theta* = %.10g, |det| %.4g -> %.4g", used_x[0], used_x[1],
                  n > 2 ? ", ..." : "", rr.theta_root, std::abs(rr.det_large), std::abs(rr.det_small));
    ray.note = buf;
  } else {
    ray.skipped = mono.skipped = true;
    ray.note = mono.note = "no margin-zero direction found on the candidate rays: " + rr.note;
  }
  ray.finalize();
  mono.finalize();
  rep.identities.push_back(std::move(ray));
  rep.identities.push_back(std::move(mono));

  const ProjectiveReport pr = projective_check(model, change_batch, orientation);
  IdentityEntry proj("projective", "projective.non_proportional",
                     "|(G^ - G) orthogonal to y in g| / |G^ - G| > 1e-8 where phi is not parallel to y", 1e-8,
                     Check::Lower);
  std::size_t parallel = 0;
  for (const auto& p : pr.points) {
    if (p.parallel) ++parallel;
    else proj.add_value(p.sample, p.ratio);
  }
  if (pr.skipped) {
    proj.skipped = true;
    proj.note = pr.diagnostic;
  } else if (parallel) {
    proj.note = std::to_string(parallel) + " samples with phi parallel to y";
  }
  proj.finalize();
  rep.identities.push_back(std::move(proj));

  if (is_matsumoto_example(model)) {
    const std::size_t count = std::min(cfg.rational_samples, change_batch.size());
    rep.append(rational_decomposition_check(model, change_batch.first(count), orientation));
  }
  return rep;
}

/// Orientation with the smaller total change-suite residual over the verify
/// batches (ties go to +1).
inline int select_orientation(const ModelDef& model, const VerifyConfig& cfg, double* total_plus = nullptr,
                              double* total_minus = nullptr) {
  double totals[2] = {0.0, 0.0};
  for (int o : {1, -1}) {
    const SampleSet set = draw_samples(model, cfg.samples, cfg.box, cfg.seed,
                                       o > 0 ? Stream::ChangePositive : Stream::ChangeNegative, hat_filter(model, o));
    totals[o > 0 ? 0 : 1] = change_suite(model, set.samples, o).report.total_residual();
  }
  if (total_plus) *total_plus = totals[0];
  if (total_minus) *total_minus = totals[1];
  return totals[1] < totals[0] ? -1 : 1;
}

/// Everything `verify` reports.
inline VerifyResult run_verify(const ModelDef& model, const VerifyConfig& cfg) {
  if (cfg.orientation != 0) check_orientation(cfg.orientation);
  VerifyResult out;
  out.seed = cfg.seed;
  out.report.model = model.name;
  out.report.n_samples = cfg.samples;

  const auto note_sampling = [&](const std::string& suite, const SampleSet& s) {
    out.sampling[suite] = {s.samples.size(), s.rejected};
  };

  const SampleSet core = draw_samples(model, cfg.samples, cfg.box, cfg.seed, Stream::Core, domain_filter(model));
  note_sampling("core", core);
  if (core.samples.empty()) throw DomainEscape("no sample of the box lies in the model domain");
  IdentityReport core_rep = core_suite(model, core.samples, &out.sigma, cfg.threads);

  std::map<int, ChangeSuiteResult> change;
  std::map<int, SampleSet> change_sets;
  for (int o : {1, -1}) {
    SampleSet set = draw_samples(model, cfg.samples, cfg.box, cfg.seed,
                                 o > 0 ? Stream::ChangePositive : Stream::ChangeNegative, hat_filter(model, o));
    note_sampling(o > 0 ? "change+1" : "change-1", set);
    ChangeSuiteResult r = change_suite(model, set.samples, o);
    detail::apply_overrides(r.report, cfg);
    if (set.samples.size() < cfg.samples) {
      for (auto& e : r.report.identities) {
        if (!e.skipped) {
          e.note = "only " + std::to_string(set.samples.size()) + " samples satisfy |margin| > 0.1 F" +
                   (e.note.empty() ? "" : "; " + e.note);
        }
      }
    }
    change.emplace(o, std::move(r));
    change_sets.emplace(o, std::move(set));
  }
  out.total_plus = change.at(1).report.total_residual();
  out.total_minus = change.at(-1).report.total_residual();
  int orientation = cfg.orientation;
  if (orientation == 0) {
    orientation = out.total_minus < out.total_plus ? -1 : 1;
    out.orientation_mode = "auto";
  } else {
    out.orientation_mode = "fixed";
  }
  out.report.orientation = orientation;
  for (std::size_t k = 0; k < change.at(1).report.identities.size(); ++k) {
    const auto& p = change.at(1).report.identities[k];
    const auto& m = change.at(-1).report.identities[k];
    if (p.check != Check::Upper) continue;
    out.comparison.push_back({p.name, p.residual, m.residual, p.passed, m.passed});
  }

  const SampleSet num_base =
      draw_samples(model, cfg.numeric_samples, cfg.box, cfg.seed, Stream::Numerics, domain_filter(model));
  const SampleSet num_hat =
      draw_samples(model, cfg.numeric_samples, cfg.box, cfg.seed, Stream::Geodesic, hat_filter(model, orientation));
  note_sampling("numerics", num_base);
  note_sampling("numerics_hat", num_hat);
  IdentityReport num_rep = numerics_suite(model, num_base.samples, num_hat.samples, orientation, cfg);

  const SampleSet scan = draw_samples(model, cfg.samples, cfg.box, cfg.seed, Stream::Nondegeneracy, domain_filter(model));
  note_sampling("nondegeneracy", scan);
  IdentityReport thm_rep = theorem_suite(model, scan.samples, change_sets.at(orientation).samples, orientation, cfg);

  out.report.append(std::move(core_rep));
  out.report.append(std::move(change.at(orientation).report));
  out.report.append(std::move(thm_rep));
  out.report.append(std::move(num_rep));
  detail::apply_overrides(out.report, cfg);
  return out;
}

inline nlohmann::ordered_json to_json(const VerifyResult& r) {
  nlohmann::ordered_json j = to_json(r.report);
  nlohmann::ordered_json out;
  out["model"] = j["model"];
  out["seed"] = r.seed;
  out["orientation"] = r.report.orientation;
  out["orientation_mode"] = r.orientation_mode;
  out["orientation_totals"] = {{"+1", number_json(r.total_plus)}, {"-1", number_json(r.total_minus)}};
  out["sigma"] = number_json(r.sigma);
  out["n_samples"] = r.report.n_samples;
  out["passed"] = r.passed();
  nlohmann::ordered_json sampling;
  for (const auto& [suite, counts] : r.sampling) sampling[suite] = {{"drawn", counts.first}, {"rejected", counts.second}};
  out["sampling"] = sampling;
  out["identities"] = j["identities"];
  out["orientation_comparison"] = nlohmann::ordered_json::array();
  for (const auto& row : r.comparison) {
    out["orientation_comparison"].push_back({{"name", row.name},
                                             {"residual_plus", number_json(row.residual_plus)},
                                             {"residual_minus", number_json(row.residual_minus)},
                                             {"passed_plus", row.passed_plus},
                                             {"passed_minus", row.passed_minus}});
  }
  return out;
}

inline std::string orientation_table(const VerifyResult& r) {
  std::size_t width = 8;
  for (const auto& row : r.comparison) width = std::max(width, row.name.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %-10s  %-4s  %-10s  %-4s\n", static_cast<int>(width), "identity", "+1", "",
                "-1", "");
  out += line;
  for (const auto& row : r.comparison) {
    std::snprintf(line, sizeof line, "%-*s  %-10s  %-4s  %-10s  %-4s\n", static_cast<int>(width), row.name.c_str(),
                  format_residual(row.residual_plus).c_str(), row.passed_plus ? "ok" : "FAIL",
                  format_residual(row.residual_minus).c_str(), row.passed_minus ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof line, "total  +1 %s  -1 %s  selected %+d (%s)\n", format_residual(r.total_plus).c_str(),
                format_residual(r.total_minus).c_str(), r.report.orientation, r.orientation_mode.c_str());
  out += line;
  return out;
}

inline std::string to_table(const VerifyResult& r) {
  std::string out = to_table(r.report);
  char line[128];
  std::snprintf(line, sizeof line, "sigma %.12g  seed %llu\n\norientation comparison\n", r.sigma,
                static_cast<unsigned long long>(r.seed));
  out += line;
  out += orientation_table(r);
  return out;
}

inline std::string to_csv(const VerifyResult& r) {
  std::string out = "suite,name,check,residual,tolerance,worst_sample,samples,passed,skipped\n";
  char line[512];
  for (const auto& e : r.report.identities) {
    std::snprintf(line, sizeof line, "%s,%s,%s,%.17g,%.17g,%zu,%zu,%d,%d\n", e.suite.c_str(), e.name.c_str(),
                  check_name(e.check), e.residual, e.tolerance, e.worst_sample, e.samples, e.passed ? 1 : 0,
                  e.skipped ? 1 : 0);
    out += line;
  }
  return out;
}

/// The engine's value for one fixture row; names as in fixtures/*.txt.
inline double fixture_engine_value(const ModelDef& model, const ReferenceFixture& fx) {
  const TangentSample s = make_sample(model, fx.x, fx.y);
  const ModelFunction f(model);
  const std::string& name = fx.name;
  static const std::regex indexed(R"(^(g|ginv|C|G|a|ell)(\d+)$)");
  static const std::regex gamma(R"(^Gamma(\d)_(\d)(\d)$)");
  std::smatch m;
  const auto idx = [&](char c) { return static_cast<std::size_t>(c - '1'); };
  if (name == "F2") return f.squared(coordinates(s.x, s.y));
  if (name == "F") return f.value(coordinates(s.x, s.y));
  if (name == "Phi" || name == "p2" || name == "margin" || name == "f1" || name == "f2" || name == "Fhat") {
    const ChangeScalars c = change_scalars(model, s, 1);
    if (name == "Phi") return c.Phi;
    if (name == "p2") return c.p2;
    if (name == "margin") return c.margin;
    if (name == "f1") return c.f1;
    if (name == "f2") return c.f2;
    return c.Fhat;
  }
  if (name == "theta") {
    if (!is_matsumoto_example(model)) throw PreconditionError("theta is defined for the shipped example only");
    return example::theta(s.x, s.y);
  }
  if (std::regex_match(name, m, gamma)) {
    const auto G = cartan_hcoeffs(f, s);
    return G(idx(m[1].str()[0]), idx(m[2].str()[0]), idx(m[3].str()[0]));
  }
  if (std::regex_match(name, m, indexed)) {
    const std::string kind = m[1];
    const std::string digits = m[2];
    if (kind == "a") {
      if (!is_matsumoto_example(model)) throw PreconditionError("a_ij is defined for the shipped example only");
      const MetricData md = metric_data(f, s);
      const double th = example::theta(s.x, s.y);
      return md.g(idx(digits[0]), idx(digits[1])) / th;
    }
    if (kind == "G" && digits.size() == 1) return spray(f, s)[idx(digits[0])];
    const MetricData md = metric_data(f, s);
    if (kind == "ell" && digits.size() == 1) return md.ell[idx(digits[0])];
    if (kind == "g" && digits.size() == 2) return md.g(idx(digits[0]), idx(digits[1]));
    if (kind == "ginv" && digits.size() == 2) return md.ginv(idx(digits[0]), idx(digits[1]));
    if (kind == "C" && digits.size() == 3) return md.cartanC(idx(digits[0]), idx(digits[1]), idx(digits[2]));
  }
  throw PreconditionError("unknown fixture quantity '" + name + "'");
}

}  // namespace finslerlab
