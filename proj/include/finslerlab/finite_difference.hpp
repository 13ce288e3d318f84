#pragma once

// Central finite differences, used as an oracle against jet derivatives.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/jet.hpp"

namespace finslerlab {

struct DiffConfig {
  int order = 5;          // jet truncation order used by the geometry engine
  double fd_step = 1e-5;  // base step for first derivatives
  bool richardson = false;
};

using ScalarField = std::function<double(std::span<const double>)>;
using DomainTest = std::function<bool(std::span<const double>)>;

namespace detail {

// Weights of the one-dimensional central stencil for the m-th derivative,
// offsets in units of h. Truncation error is O(h^2) for m = 1, 2, 3.
struct Stencil {
  std::vector<int> offsets;
  std::vector<double> weights;
  int power;  // divide by h^power
};

inline Stencil central_stencil(int m) {
  switch (m) {
    case 0: return {{0}, {1.0}, 0};
    case 1: return {{-1, 1}, {-0.5, 0.5}, 1};
    case 2: return {{-1, 0, 1}, {1.0, -2.0, 1.0}, 2};
    case 3: return {{-2, -1, 1, 2}, {-0.5, 1.0, -1.0, 0.5}, 3};
    default: throw PreconditionError("fd_derivative: per-variable order above 3");
  }
}

inline double tensor_difference(const ScalarField& f, std::span<const double> point,
                                const MultiIndex& alpha, double h,
                                const DomainTest& inside) {
  std::vector<Stencil> stencils;
  std::vector<std::size_t> vars;
  for (std::size_t v = 0; v < alpha.size(); ++v) {
    if (alpha[v] > 0) {
      stencils.push_back(central_stencil(alpha[v]));
      vars.push_back(v);
    }
  }
  std::vector<double> probe(point.begin(), point.end());
  std::vector<std::size_t> pos(stencils.size(), 0);
  double sum = 0.0;
  while (true) {
    double w = 1.0;
    std::copy(point.begin(), point.end(), probe.begin());
    for (std::size_t k = 0; k < stencils.size(); ++k) {
      w *= stencils[k].weights[pos[k]];
      probe[vars[k]] += stencils[k].offsets[pos[k]] * h;
    }
    if (inside && !inside(probe)) {
      throw DomainEscape("fd_derivative: stencil point outside the domain");
    }
    sum += w * f(probe);
    std::size_t k = 0;
    for (; k < stencils.size(); ++k) {
      if (++pos[k] < stencils[k].offsets.size()) break;
      pos[k] = 0;
    }
    if (k == stencils.size()) break;
  }
  int total = 0;
  for (const auto& s : stencils) total += s.power;
  return sum / std::pow(h, total);
}

}  // namespace detail

/// Step used for a derivative of total order k: fd_step * 10^(k-1).
inline double fd_step_for(const DiffConfig& cfg, int k) {
  return cfg.fd_step * std::pow(10.0, std::max(k, 1) - 1);
}

/// Central-difference estimate of d^alpha f at `point`, |alpha| <= 3.
/// Error is O(h^2); with cfg.richardson the h and h/2 estimates are combined
/// for O(h^4).
inline double fd_derivative(const ScalarField& f, std::span<const double> point,
                            const MultiIndex& alpha, const DiffConfig& cfg = {},
                            const DomainTest& inside = {}) {
  if (alpha.size() != point.size()) {
    throw PreconditionError("fd_derivative: multi-index length mismatch");
  }
  const int k = degree(alpha);
  if (k > 3) throw PreconditionError("fd_derivative: total order above 3");
  if (!(cfg.fd_step > 0.0)) throw PreconditionError("fd_derivative: step must be > 0");
  if (k == 0) return f(point);
  const double h = fd_step_for(cfg, k);
  const double coarse = detail::tensor_difference(f, point, alpha, h, inside);
  if (!cfg.richardson) return coarse;
  const double fine = detail::tensor_difference(f, point, alpha, 0.5 * h, inside);
  return (4.0 * fine - coarse) / 3.0;
}

}  // namespace finslerlab
