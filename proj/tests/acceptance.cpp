// Acceptance criteria 1-10, one PASS/FAIL line each; exits 1 if any fails.

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "finslerlab/verify.hpp"

using namespace finslerlab;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) { return format_residual(v); }

const ModelDef& example_model() {
  static const ModelDef m = load_model(std::string(FINSLERLAB_SOURCE_DIR) + "/models/matsumoto_example.fmod");
  return m;
}

const ModelDef& flat_model() {
  static const ModelDef m = load_model(std::string(FINSLERLAB_SOURCE_DIR) + "/models/euclid_concurrent.fmod");
  return m;
}

VerifyConfig default_config() {
  VerifyConfig cfg;
  cfg.samples = 100;
  cfg.seed = 42;
  return cfg;
}

const VerifyResult& verified(const ModelDef& m) {
  static std::map<std::string, VerifyResult> cache;
  auto it = cache.find(m.name);
  if (it == cache.end()) it = cache.emplace(m.name, run_verify(m, default_config())).first;
  return it->second;
}

std::vector<TangentSample> hat_samples(const ModelDef& m, int orientation, std::size_t count) {
  return draw_samples(m, count, Box{}, 42, orientation > 0 ? Stream::ChangePositive : Stream::ChangeNegative,
                      hat_filter(m, orientation))
      .samples;
}

double worst_of(const IdentityReport& rep, const std::vector<std::string>& names, bool* all_present) {
  double w = 0.0;
  *all_present = true;
  for (const auto& n : names) {
    if (!rep.contains(n)) {
      *all_present = false;
      continue;
    }
    const auto& e = rep.find(n);
    if (std::isnan(e.residual) || e.samples == 0) *all_present = false;
    w = std::max(w, e.residual);
  }
  return w;
}

Outcome criterion1() {
  const ModelDef& m = example_model();
  const ModelFunction f(m);
  const auto batch = draw_samples(m, 50, Box{}, 42, Stream::Core, domain_filter(m)).samples;
  if (batch.size() != 50) return {false, "could not draw 50 samples"};
  double worst = 0.0;
  double worst_gamma = 0.0;
  for (const auto& s : batch) {
    const MetricData md = metric_data(f, s);
    const auto G = spray(f, s);
    worst = std::max(worst, pair_residual({0, md.g.data(), example::g(s.x, s.y).data()}));
    worst = std::max(worst, pair_residual({0, md.ginv.data(), example::ginv(s.x, s.y).data()}));
    worst = std::max(worst, pair_residual({0, md.cartanC.data(), example::cartan_torsion(s.x, s.y).data()}));
    worst = std::max(worst, pair_residual({0, G, example::spray(s.x, s.y)}));
    const auto Gamma = cartan_hcoeffs(f, s);
    const auto expected = example::cartan_gamma(s.x);
    worst_gamma = std::max(worst_gamma, pair_residual({0, {Gamma(0, 0, 2), Gamma(1, 1, 2), Gamma(2, 2, 2)}, expected}));
  }
  const auto fixtures = load_fixtures(std::string(FINSLERLAB_SOURCE_DIR) + "/fixtures/reference_values.txt");
  double worst_fixture = 0.0;
  for (const auto& fx : fixtures) {
    if (fx.model != m.name) continue;
    const double v = fixture_engine_value(m, fx);
    worst_fixture = std::max(worst_fixture, std::abs(v - fx.value) / std::max(1.0, std::abs(fx.value)));
  }
  const bool ok = worst <= 1e-8 && worst_gamma <= 1e-8 && worst_fixture <= 1e-8;
  return {ok, "g/ginv/C/G " + fmt(worst) + ", Gamma " + fmt(worst_gamma) + ", fixtures " + fmt(worst_fixture)};
}

Outcome criterion2() {
  const auto ex = draw_samples(example_model(), 100, Box{}, 42, Stream::Core, domain_filter(example_model())).samples;
  const auto fl = draw_samples(flat_model(), 100, Box{}, 42, Stream::Core, domain_filter(flat_model())).samples;
  const CovariantReport a = concurrency_probe(example_model(), ex);
  const CovariantReport b = concurrency_probe(flat_model(), fl);
  const bool ok = a.sigma == 1.0 && a.residual <= 1e-8 && a.vertical <= 1e-10 && b.sigma == -1.0 && b.residual <= 1e-12;
  char buf[200];
  std::snprintf(buf, sizeof buf, "example sigma %+g residual %s vertical %s; euclid sigma %+g residual %s", a.sigma,
                fmt(a.residual).c_str(), fmt(a.vertical).c_str(), b.sigma, fmt(b.residual).c_str());
  return {ok, buf};
}

const std::vector<std::string> kMasterIdentities = {
    "change.supporting_form", "change.angular_metric",       "change.metric", "change.cartan_torsion",
    "change.spray",           "change.nonlinear_connection", "change.berwald", "change.curvature"};

Outcome criterion3() {
  const auto batch = hat_samples(flat_model(), 1, 100);
  const auto res = change_suite(flat_model(), batch, 1);
  bool present = false;
  const double w = worst_of(res.report, kMasterIdentities, &present);
  const bool ok = batch.size() == 100 && res.excluded == 0 && present && w <= 1e-6;
  return {ok, "orientation +1, " + std::to_string(batch.size()) + " samples, worst " + fmt(w)};
}

Outcome criterion4() {
  const VerifyResult& r = verified(example_model());
  bool present = false;
  const double w = worst_of(r.report, kMasterIdentities, &present);
  std::string isolated;
  for (const auto& row : r.comparison) {
    const bool selected_plus = r.report.orientation > 0;
    const bool other_passed = selected_plus ? row.passed_minus : row.passed_plus;
    if (!other_passed) isolated += (isolated.empty() ? "" : ",") + row.name.substr(row.name.find('.') + 1);
  }
  const bool ok = present && w <= 1e-6 && !r.comparison.empty() && !r.orientation_mode.empty();
  char buf[160];
  std::snprintf(buf, sizeof buf, "selected %+d (%s), worst %s; other orientation fails: ", r.report.orientation,
                r.orientation_mode.c_str(), fmt(w).c_str());
  return {ok, buf + (isolated.empty() ? std::string("none") : isolated)};
}

Outcome criterion5() {
  const ModelDef& m = flat_model();
  const RayReport ray = nondegeneracy_ray(m, 1, Ray{{0.8, 0.0}, 0, 1});
  const SampleFilter ring = [&](const TangentSample& s) {
    const double r = std::hypot(s.x[0], s.x[1]);
    return s.inside() && r > 0.5 && r < 1.0;
  };
  const auto batch = draw_samples(m, 100, Box{{-1.0, 1.0}, {-1.0, 1.0}}, 42, Stream::Nondegeneracy, ring).samples;
  const NondegeneracyScan scan = nondegeneracy_scan(m, batch, 1);
  std::size_t considered = 0;
  for (const auto& p : scan.points) considered += std::abs(p.margin_ratio) > 0.1 ? 1 : 0;
  const bool ok = ray.found && ray.ratio <= 1e-3 && ray.monotone && scan.violations.empty() && considered > 0;
  char buf[200];
  std::snprintf(buf, sizeof buf, "root theta %.9f, det ratio %s, monotone %s; scan %zu samples, %zu violations",
                ray.theta_root, fmt(ray.ratio).c_str(), ray.monotone ? "yes" : "no", considered,
                scan.violations.size());
  return {ok, buf};
}

Outcome criterion6() {
  bool ok = true;
  std::string detail;
  for (const ModelDef* m : {&example_model(), &flat_model()}) {
    const auto& e = verified(*m).report.find("projective.non_proportional");
    ok = ok && e.passed && !e.skipped && e.samples > 0;
    detail += (detail.empty() ? "" : "; ") + m->name + " min ratio " + fmt(e.residual) + " over " +
              std::to_string(e.samples) + " samples";
  }
  return {ok, detail};
}

Outcome criterion7() {
  bool ok = true;
  std::string detail;
  for (const ModelDef* m : {&example_model(), &flat_model()}) {
    const int o = verified(*m).report.orientation;
    const auto batch = hat_samples(*m, o, 100);
    const IdentityReport rep = lemma_identity_suite(*m, batch, o);
    double w = 0.0;
    bool complete = batch.size() == 100;
    for (const auto& e : rep.identities) {
      complete = complete && e.samples == 100;
      w = std::max(w, e.residual);
    }
    ok = ok && complete && w <= 1e-8;
    char buf[120];
    std::snprintf(buf, sizeof buf, "%s (%+d) worst %s", m->name.c_str(), o, fmt(w).c_str());
    detail += (detail.empty() ? "" : "; ") + std::string(buf);
  }
  return {ok, detail};
}

Outcome criterion8() {
  const int o = verified(example_model()).report.orientation;
  const auto batch = hat_samples(example_model(), o, 30);
  const IdentityReport rep = rational_decomposition_check(example_model(), batch, o);
  const auto& base = rep.find("rational.metric");
  const auto& changed = rep.find("rational.changed_metric");
  const auto& general = rep.find("rational.changed_metric_general");
  const bool ok = batch.size() == 30 && base.samples == 30 && changed.samples == 30 && base.residual <= 1e-9 &&
                  changed.residual <= 1e-9 && general.residual <= 1e-9;
  return {ok, "theta a vs g " + fmt(base.residual) + ", theta^ a^ vs g^ " + fmt(changed.residual) +
                  ", with the example's theta " + fmt(general.residual)};
}

Outcome criterion9() {
  bool ok = true;
  std::string detail;
  for (const ModelDef* m : {&example_model(), &flat_model()}) {
    const auto& rep = verified(*m).report;
    double fd = 0.0;
    double drift = 0.0;
    for (const char* n : {"numerics.jet_vs_fd_F2", "numerics.jet_vs_fd_Fhat2"}) {
      const auto& e = rep.find(n);
      ok = ok && e.passed && e.samples >= 20 && e.residual <= 1e-5;
      fd = std::max(fd, e.residual);
    }
    for (const char* n : {"numerics.geodesic_F", "numerics.geodesic_Fhat"}) {
      const auto& e = rep.find(n);
      ok = ok && e.passed && e.samples > 0 && e.residual <= 1e-6;
      drift = std::max(drift, e.residual);
    }
    detail += (detail.empty() ? "" : "; ") + m->name + " fd " + fmt(fd) + " drift " + fmt(drift);
  }
  return {ok, detail};
}

std::string capture(const std::string& cmd, int* code) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    *code = -1;
    return out;
  }
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int status = pclose(pipe);
  *code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

Outcome criterion10() {
  bool ok = true;
  std::string detail;
  for (const ModelDef* m : {&example_model(), &flat_model()}) {
    const std::string a = to_json(run_verify(*m, default_config())).dump(2);
    const std::string b = to_json(run_verify(*m, default_config())).dump(2);
    ok = ok && a == b;
    detail += (detail.empty() ? "" : "; ") + m->name + (a == b ? " library identical" : " library differs");
  }
#ifdef FINSLERLAB_CLI
  const std::string cmd = std::string(FINSLERLAB_CLI) + " verify --model " + FINSLERLAB_SOURCE_DIR +
                          "/models/matsumoto_example.fmod --seed 42 --format json 2>/dev/null";
  int c1 = 0;
  int c2 = 0;
  const std::string first = capture(cmd, &c1);
  const std::string second = capture(cmd, &c2);
  const bool same = !first.empty() && first == second && c1 == c2;
  ok = ok && same;
  detail += std::string("; cli ") + (same ? "identical" : "differs") + " (" + std::to_string(first.size()) + " bytes)";
#endif
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                          criterion5, criterion6, criterion7, criterion8,
                                                          criterion9, criterion10};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.passed) ++failed;
    std::printf("criterion %zu: %s %s\n", k + 1, o.passed ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
