// finslerlab: inspect a model at a point, verify every identity suite over a
// seeded batch, or integrate a geodesic of F or of the changed metric.
//
// Exit codes: 0 pass, 1 identity failure, 2 domain error, 3 parse error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "finslerlab/connections.hpp"
#include "finslerlab/core.hpp"
#include "finslerlab/matsumoto.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/verify.hpp"

namespace {

using namespace finslerlab;
using json = nlohmann::ordered_json;

enum Exit { kPass = 0, kFail = 1, kDomain = 2, kParse = 3 };

struct ParseFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ModelDef resolve_model(const std::string& spec) {
  if (std::filesystem::exists(spec)) return load_model(spec);
  for (const auto& m : builtin_models()) {
    if (m.name == spec) return m;
  }
  throw ParseFailure("cannot open model file '" + spec + "'");
}

int parse_orientation(const std::string& text) {
  if (text == "auto") return 0;
  if (text == "+1" || text == "1") return 1;
  if (text == "-1") return -1;
  throw ParseFailure("orientation must be auto, +1 or -1");
}

Interval parse_interval(const std::vector<double>& v, const char* what) {
  if (v.size() != 2 || !(v[0] < v[1])) throw ParseFailure(std::string(what) + " expects lo,hi with lo < hi");
  return {v[0], v[1]};
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ParseFailure("cannot write '" + path + "'");
  out << text;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

json matrix_json(const Matrix<double>& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(number_json(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

json tensor_json(const Tensor3<double>& t) {
  json out = json::array();
  for (std::size_t i = 0; i < t.dim(); ++i) {
    json slab = json::array();
    for (std::size_t j = 0; j < t.dim(); ++j) {
      json row = json::array();
      for (std::size_t k = 0; k < t.dim(); ++k) row.push_back(number_json(t(i, j, k)));
      slab.push_back(row);
    }
    out.push_back(slab);
  }
  return out;
}

json vector_json(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number_json(x));
  return out;
}

struct InspectOptions {
  std::string model;
  std::vector<double> x;
  std::vector<double> y;
  std::string orientation = "auto";
  std::string format = "table";
  std::string out;
};

int cmd_inspect(const InspectOptions& o) {
  const ModelDef model = resolve_model(o.model);
  const int orientation = parse_orientation(o.orientation);
  if (o.x.size() != model.n() || o.y.size() != model.n()) {
    throw ParseFailure("--x and --y need " + std::to_string(model.n()) + " components each");
  }
  const ModelFunction f(model);
  const TangentSample s = make_sample(model, o.x, o.y);
  const JetGeometry geo = detail::checked_geometry(f, s, kFullOrder);
  const MetricData m = metric_data_from(geo);
  const ConnectionData c = connection_data_from(geo);
  const auto [hcov, vcov] = covariant_phi(f, geo);
  const std::size_t n = model.n();

  std::vector<int> orientations;
  if (orientation == 0) orientations = {1, -1};
  else orientations = {orientation};

  json j;
  j["model"] = model.name;
  j["x"] = vector_json(s.x);
  j["y"] = vector_json(s.y);
  j["metric"] = {{"F", m.F},
                 {"E", m.E},
                 {"g", matrix_json(m.g)},
                 {"ginv", matrix_json(m.ginv)},
                 {"ell", vector_json(m.ell)},
                 {"hbar", matrix_json(m.hbar)},
                 {"C", tensor_json(m.cartanC)},
                 {"det", m.det},
                 {"condition", m.condition},
                 {"signature", {m.signature.positive, m.signature.negative, m.signature.zero}}};
  j["connection"] = {{"G", vector_json(c.sprayG)},
                     {"N", matrix_json(c.N)},
                     {"berwald", tensor_json(c.berwald)},
                     {"curvature", tensor_json(c.curvR)},
                     {"cartan_gamma", tensor_json(c.cartanGamma)}};
  j["concurrency"] = {{"phi", vector_json(concurrent_field(model, s.x))},
                      {"horizontal", matrix_json(hcov)},
                      {"vertical", matrix_json(vcov)}};
  j["change"] = json::array();
  for (int orient : orientations) {
    json entry;
    entry["orientation"] = orient;
    try {
      const ChangeScalars cs = change_scalars(model, s, orient);
      entry["Phi"] = cs.Phi;
      entry["p2"] = cs.p2;
      entry["margin"] = cs.margin;
      entry["f1"] = cs.f1;
      entry["f2"] = cs.f2;
      entry["Fhat"] = cs.Fhat;
    } catch (const Error& e) {
      entry["error"] = e.what();
    }
    j["change"].push_back(entry);
  }

  if (o.format == "json") {
    emit(o.out, j.dump(2) + "\n");
    return kPass;
  }
  if (o.format != "table") throw ParseFailure("inspect supports --format json|table");
  std::ostringstream t;
  t << "model " << model.name << "\n";
  t << "F = " << num(m.F) << "\n";
  const auto idx = [](std::size_t i) { return std::to_string(i + 1); };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i; k < n; ++k) t << "g" << idx(i) << idx(k) << " = " << num(m.g(i, k)) << "\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i; k < n; ++k) t << "ginv" << idx(i) << idx(k) << " = " << num(m.ginv(i, k)) << "\n";
  for (std::size_t i = 0; i < n; ++i) t << "ell" << idx(i) << " = " << num(m.ell[i]) << "\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i; k < n; ++k)
      for (std::size_t l = k; l < n; ++l)
        t << "C" << idx(i) << idx(k) << idx(l) << " = " << num(m.cartanC(i, k, l)) << "\n";
  t << "det = " << num(m.det) << "\n";
  t << "signature = (" << m.signature.positive << ", " << m.signature.negative << ", " << m.signature.zero << ")\n";
  for (std::size_t i = 0; i < n; ++i) t << "G" << idx(i) << " = " << num(c.sprayG[i]) << "\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) t << "N" << idx(i) << "_" << idx(k) << " = " << num(c.N(i, k)) << "\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = k; l < n; ++l)
        t << "Gamma" << idx(i) << "_" << idx(k) << idx(l) << " = " << num(c.cartanGamma(i, k, l)) << "\n";
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) t << "phi" << idx(i) << "_|" << idx(k) << " = " << num(hcov(i, k)) << "\n";
  for (const auto& entry : j["change"]) {
    const int orient = entry["orientation"].get<int>();
    const std::string tag = orient > 0 ? "[+1]" : "[-1]";
    if (entry.contains("error")) {
      t << "change" << tag << " " << entry["error"].get<std::string>() << "\n";
      continue;
    }
    for (const char* key : {"Phi", "p2", "margin", "f1", "f2", "Fhat"}) {
      t << key << tag << " = " << num(entry[key].get<double>()) << "\n";
    }
  }
  emit(o.out, t.str());
  return kPass;
}

struct VerifyOptions {
  std::string model;
  std::uint64_t seed = 42;
  std::size_t samples = 100;
  std::string orientation = "auto";
  std::string format = "json";
  std::string out;
  std::vector<double> box_x;
  std::vector<double> box_y;
  std::vector<std::string> tolerances;
  unsigned threads = 0;
};

int cmd_verify(const VerifyOptions& o) {
  const ModelDef model = resolve_model(o.model);
  VerifyConfig cfg;
  cfg.seed = o.seed;
  cfg.samples = o.samples;
  cfg.orientation = parse_orientation(o.orientation);
  cfg.threads = o.threads;
  if (!o.box_x.empty()) cfg.box.x = parse_interval(o.box_x, "--box-x");
  if (!o.box_y.empty()) cfg.box.y = parse_interval(o.box_y, "--box-y");
  for (const auto& t : o.tolerances) {
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseFailure("--tol expects name=value");
    try {
      cfg.tolerances[t.substr(0, eq)] = std::stod(t.substr(eq + 1));
    } catch (const std::exception&) {
      throw ParseFailure("--tol value is not a number: " + t);
    }
  }
  const VerifyResult r = run_verify(model, cfg);
  if (o.format == "json") {
    emit(o.out, to_json(r).dump(2) + "\n");
  } else if (o.format == "table") {
    emit(o.out, to_table(r));
  } else if (o.format == "csv") {
    emit(o.out, to_csv(r));
  } else {
    throw ParseFailure("verify supports --format json|csv|table");
  }
  if (!r.passed()) {
    for (const auto& e : r.report.identities) {
      if (!e.passed) std::cerr << "failed: " << e.name << " residual " << format_residual(e.residual) << "\n";
    }
  }
  return r.passed() ? kPass : kFail;
}

struct GeodesicOptions {
  std::string model;
  std::vector<double> x;
  std::vector<double> y;
  double t_end = 1.0;
  double step = 1e-3;
  std::string which = "base";
  std::string orientation = "auto";
  std::string format = "csv";
  std::string out;
  std::uint64_t seed = 42;
};

int cmd_geodesic(const GeodesicOptions& o) {
  const ModelDef model = resolve_model(o.model);
  int orientation = parse_orientation(o.orientation);
  if (o.x.size() != model.n() || o.y.size() != model.n()) {
    throw ParseFailure("--x and --y need " + std::to_string(model.n()) + " components each");
  }
  if (o.which != "base" && o.which != "hat") throw ParseFailure("--which must be base or hat");
  const TangentSample s = make_sample(model, o.x, o.y);
  const ModelFunction f(model);
  Trajectory traj;
  if (o.which == "base") {
    traj = integrate_geodesic(f, s, o.t_end, o.step);
  } else {
    if (orientation == 0) {
      VerifyConfig cfg;
      cfg.seed = o.seed;
      orientation = select_orientation(model, cfg);
    }
    const ChangedFunction hat(f, orientation);
    traj = integrate_geodesic(hat, s, o.t_end, o.step);
  }
  if (o.format == "csv") {
    std::ostringstream out;
    write_trajectory_csv(out, traj, model.n());
    emit(o.out, out.str());
  } else if (o.format == "json") {
    json j;
    j["model"] = model.name;
    j["which"] = o.which;
    if (o.which == "hat") j["orientation"] = orientation;
    j["escaped"] = traj.escaped;
    if (traj.escaped) j["escape_time"] = traj.escape_time;
    j["max_relative_drift"] = traj.max_relative_drift();
    j["points"] = json::array();
    for (const auto& p : traj.points) {
      j["points"].push_back({{"t", p.t}, {"x", vector_json(p.x)}, {"y", vector_json(p.y)}, {"F", p.F}});
    }
    emit(o.out, j.dump(2) + "\n");
  } else {
    throw ParseFailure("geodesic supports --format csv|json");
  }
  if (traj.escaped) {
    std::cerr << "geodesic left the domain at t = " << traj.escape_time << "\n";
    return kDomain;
  }
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finsler metric toolkit: inspect, verify, geodesic"};
  app.require_subcommand(1);

  InspectOptions io;
  auto* inspect = app.add_subcommand("inspect", "Dump metric, connection and change data at one point");
  inspect->add_option("--model", io.model, "Model file or built-in model name")->required();
  inspect->add_option("--x", io.x, "Position, comma separated")->delimiter(',')->required();
  inspect->add_option("--y", io.y, "Direction, comma separated")->delimiter(',')->required();
  inspect->add_option("--orientation", io.orientation, "auto|+1|-1");
  inspect->add_option("--format", io.format, "json|table");
  inspect->add_option("--out", io.out, "Output path (default stdout)");

  VerifyOptions vo;
  auto* verify = app.add_subcommand("verify", "Run every identity suite over a seeded batch");
  verify->add_option("--model", vo.model, "Model file or built-in model name")->required();
  verify->add_option("--seed", vo.seed, "Seed of the sample streams");
  verify->add_option("--samples", vo.samples, "Samples per suite")->check(CLI::PositiveNumber);
  verify->add_option("--orientation", vo.orientation, "auto|+1|-1");
  verify->add_option("--format", vo.format, "json|csv|table");
  verify->add_option("--out", vo.out, "Output path (default stdout)");
  verify->add_option("--box-x", vo.box_x, "Sampling interval for x, lo,hi")->delimiter(',');
  verify->add_option("--box-y", vo.box_y, "Sampling interval for y, lo,hi")->delimiter(',');
  verify->add_option("--tol", vo.tolerances, "Tolerance override name=value (repeatable)");
  verify->add_option("--threads", vo.threads, "Worker threads (0 = hardware)");

  GeodesicOptions go;
  auto* geodesic = app.add_subcommand("geodesic", "Integrate a geodesic of F or of the changed metric");
  geodesic->add_option("--model", go.model, "Model file or built-in model name")->required();
  geodesic->add_option("--x", go.x, "Initial position, comma separated")->delimiter(',')->required();
  geodesic->add_option("--y", go.y, "Initial velocity, comma separated")->delimiter(',')->required();
  geodesic->add_option("--t-end", go.t_end, "Final time");
  geodesic->add_option("--step", go.step, "RK4 step");
  geodesic->add_option("--which", go.which, "base|hat");
  geodesic->add_option("--orientation", go.orientation, "auto|+1|-1 (hat only)");
  geodesic->add_option("--seed", go.seed, "Seed used when the orientation is selected automatically");
  geodesic->add_option("--format", go.format, "csv|json");
  geodesic->add_option("--out", go.out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kParse;
  }

  try {
    if (inspect->parsed()) return cmd_inspect(io);
    if (verify->parsed()) return cmd_verify(vo);
    return cmd_geodesic(go);
  } catch (const ParseFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kParse;
  } catch (const SyntaxError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ValidationError& e) {
    std::cerr << "invalid model: " << e.what() << "\n";
    return kParse;
  } catch (const Error& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return kDomain;
  }
}
