#pragma once

// Identity reports: predicted/direct pairs per sample, residuals recomputed
// from the stored pairs, JSON and plain-text rendering.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "finslerlab/error.hpp"
#include "finslerlab/linalg.hpp"

namespace finslerlab {

/// Runs fn(i) for i in [0, count) on a small thread pool. Results must be
/// written to slot i by the callee; the first exception (lowest i) is rethrown.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  std::vector<std::exception_ptr> errors(count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::vector<double> flatten(const std::vector<double>& v) { return v; }
inline std::vector<double> flatten(const Matrix<double>& m) { return m.data(); }
inline std::vector<double> flatten(const Tensor3<double>& t) { return t.data(); }

struct SamplePair {
  std::size_t sample = 0;
  std::vector<double> predicted;
  std::vector<double> direct;
};

/// ||predicted - direct||_inf / max(1, ||direct||_inf).
inline double pair_residual(const SamplePair& p) {
  if (p.predicted.size() != p.direct.size()) return std::numeric_limits<double>::quiet_NaN();
  double diff = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < p.direct.size(); ++i) {
    const double d = std::abs(p.predicted[i] - p.direct[i]);
    if (std::isnan(d)) return d;
    diff = std::max(diff, d);
    scale = std::max(scale, std::abs(p.direct[i]));
  }
  return diff / scale;
}

enum class Check {
  Upper,  // residual <= tolerance
  Lower,  // every sample value > tolerance
  Info,   // reported only
};

struct IdentityEntry {
  std::string suite;
  std::string name;
  std::string anchor;
  double tolerance = 0.0;
  Check check = Check::Upper;
  std::vector<SamplePair> pairs;                         // Upper
  std::vector<std::pair<std::size_t, double>> values;    // Lower and Info
  bool skipped = false;
  std::string note;

  double residual = 0.0;
  std::size_t worst_sample = 0;
  std::size_t samples = 0;
  bool passed = false;

  IdentityEntry() = default;
  IdentityEntry(std::string suite_, std::string name_, std::string anchor_, double tol, Check c = Check::Upper)
      : suite(std::move(suite_)), name(std::move(name_)), anchor(std::move(anchor_)), tolerance(tol), check(c) {}

  void add(std::size_t sample, std::vector<double> predicted, std::vector<double> direct) {
    pairs.push_back({sample, std::move(predicted), std::move(direct)});
  }
  void add_value(std::size_t sample, double v) { values.emplace_back(sample, v); }

  void finalize() {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    residual = check == Check::Lower ? std::numeric_limits<double>::infinity() : 0.0;
    worst_sample = 0;
    bool has_nan = false;
    if (check == Check::Upper) {
      samples = pairs.size();
      bool first = true;
      for (const auto& p : pairs) {
        const double r = pair_residual(p);
        if (std::isnan(r)) {
          if (!has_nan) worst_sample = p.sample;
          has_nan = true;
          continue;
        }
        if (has_nan) continue;
        if (first || r > residual) {
          residual = r;
          worst_sample = p.sample;
          first = false;
        }
      }
    } else {
      samples = values.size();
      for (const auto& [s, v] : values) {
        if (std::isnan(v)) {
          if (!has_nan) worst_sample = s;
          has_nan = true;
          continue;
        }
        if (has_nan) continue;
        const bool worse = check == Check::Lower ? v < residual : v > residual;
        if (worse) {
          residual = v;
          worst_sample = s;
        }
      }
    }
    if (has_nan) residual = nan;
    if (samples == 0 && check == Check::Lower) residual = nan;
    if (skipped || check == Check::Info) {
      passed = true;
    } else if (samples == 0 || has_nan) {
      passed = false;
    } else if (check == Check::Upper) {
      passed = residual <= tolerance;
    } else {
      passed = residual > tolerance;
    }
  }
};

struct IdentityReport {
  std::string model;
  int orientation = 1;
  std::size_t n_samples = 0;
  std::vector<IdentityEntry> identities;

  bool passed() const {
    return std::all_of(identities.begin(), identities.end(), [](const auto& e) { return e.passed; });
  }

  /// Recomputes every residual from the stored pairs; true when all agree.
  bool audit() const {
    for (const auto& e : identities) {
      IdentityEntry copy = e;
      copy.finalize();
      const bool same = (std::isnan(copy.residual) && std::isnan(e.residual)) || copy.residual == e.residual;
      if (!same || copy.passed != e.passed || copy.worst_sample != e.worst_sample) return false;
    }
    return true;
  }

  const IdentityEntry& find(const std::string& name) const {
    for (const auto& e : identities) {
      if (e.name == name) return e;
    }
    throw PreconditionError("no identity named '" + name + "' in report");
  }

  bool contains(const std::string& name) const {
    return std::any_of(identities.begin(), identities.end(), [&](const auto& e) { return e.name == name; });
  }

  /// Sum of Upper residuals, used to compare orientations.
  double total_residual() const {
    double t = 0.0;
    for (const auto& e : identities) {
      if (e.check == Check::Upper && !e.skipped) t += std::isnan(e.residual) ? 1e300 : e.residual;
    }
    return t;
  }

  void append(IdentityReport other) {
    for (auto& e : other.identities) identities.push_back(std::move(e));
  }
};

using ChangeReport = IdentityReport;

inline const char* check_name(Check c) {
  switch (c) {
    case Check::Upper: return "max";
    case Check::Lower: return "min";
    case Check::Info: return "info";
  }
  return "?";
}

inline nlohmann::ordered_json number_json(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::ordered_json to_json(const IdentityEntry& e) {
  nlohmann::ordered_json j;
  j["suite"] = e.suite;
  j["name"] = e.name;
  j["anchor"] = e.anchor;
  j["check"] = check_name(e.check);
  j["residual"] = number_json(e.residual);
  j["worst_sample"] = e.worst_sample;
  j["tolerance"] = e.tolerance;
  j["samples"] = e.samples;
  j["passed"] = e.passed;
  if (e.skipped) j["skipped"] = true;
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

inline nlohmann::ordered_json to_json(const IdentityReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["orientation"] = r.orientation;
  j["n_samples"] = r.n_samples;
  j["identities"] = nlohmann::ordered_json::array();
  for (const auto& e : r.identities) j["identities"].push_back(to_json(e));
  return j;
}

inline std::string format_residual(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline std::string to_table(const IdentityReport& r) {
  std::size_t width = 8;
  for (const auto& e : r.identities) width = std::max(width, e.name.size());
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "model %s  orientation %+d  samples %zu\n", r.model.c_str(), r.orientation,
                r.n_samples);
  out += line;
  std::snprintf(line, sizeof line, "%-*s  %-4s  %-10s  %-9s  %6s  %s\n", static_cast<int>(width), "identity",
                "kind", "value", "tol", "worst", "status");
  out += line;
  for (const auto& e : r.identities) {
    const char* status = e.skipped ? "skip" : e.passed ? "ok" : "FAIL";
    std::snprintf(line, sizeof line, "%-*s  %-4s  %-10s  %-9.1e  %6zu  %s\n", static_cast<int>(width),
                  e.name.c_str(), check_name(e.check), format_residual(e.residual).c_str(), e.tolerance,
                  e.worst_sample, status);
    out += line;
  }
  return out;
}

}  // namespace finslerlab
