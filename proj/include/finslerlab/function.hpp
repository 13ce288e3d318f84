#pragma once

// Sources of F^2 for the geometry engine: a parsed model, or the
// phi-Matsumoto change F^2 / (F - Phi) of a model.

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/expr.hpp"
#include "finslerlab/jet.hpp"
#include "finslerlab/model.hpp"

namespace finslerlab {

class FinslerFunction {
 public:
  virtual ~FinslerFunction() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string name() const = 0;

  /// F^2 from seeded coordinate jets (x1..xn, y1..yn).
  virtual Jet squared(std::span<const Jet> coords) const = 0;
  virtual double squared(std::span<const double> coords) const = 0;

  /// Derivative orders lost between the coordinate jets and F^2.
  virtual int order_loss() const = 0;

  /// Domain membership; never throws for finite input.
  virtual bool contains(std::span<const double> coords) const = 0;

  double value(std::span<const double> coords) const { return std::sqrt(squared(coords)); }
};

/// sqrt(u) squares to u exactly; anything else is squared by multiplication.
inline Ast square_of(const Ast& F) {
  if (F->op == Op::Call && F->func == Func::Sqrt) return F->lhs;
  return ast::binary(Op::Mul, F, F);
}

class ModelFunction final : public FinslerFunction {
 public:
  explicit ModelFunction(ModelDef model)
      : model_(std::move(model)), square_(square_of(model_.F)) {}

  const ModelDef& model() const noexcept { return model_; }

  std::size_t dim() const override { return model_.n(); }
  std::string name() const override { return model_.name; }
  int order_loss() const override { return 0; }

  Jet squared(std::span<const Jet> coords) const override {
    return evaluate<Jet>(square_, coords, model_.n(), model_.param_values);
  }
  double squared(std::span<const double> coords) const override {
    return evaluate<double>(square_, coords, model_.n(), model_.param_values);
  }

  bool contains(std::span<const double> coords) const override {
    bool nonzero = false;
    for (std::size_t k = 0; k < dim(); ++k) nonzero = nonzero || coords[dim() + k] != 0.0;
    if (!nonzero || !satisfies_domain(model_, coords)) return false;
    try {
      const double f2 = squared(coords);
      return std::isfinite(f2) && f2 > 0.0;
    } catch (const EvalError&) {
      return false;
    }
  }

  /// phi^i as jets of x.
  std::vector<Jet> phi(std::span<const Jet> coords) const {
    std::vector<Jet> out;
    for (const auto& p : model_.phi) out.push_back(evaluate<Jet>(p, coords, model_.n(), model_.param_values));
    return out;
  }

 private:
  ModelDef model_;
  Ast square_;
};

/// Degeneracy threshold on |F(1+2p^2) - 3 Phi| / F.
inline constexpr double kDefaultMarginEpsilon = 1e-8;
/// F - Phi must exceed this fraction of F.
inline constexpr double kHatDomainTolerance = 1e-9;

/// Phi = orientation * g(phi, y) = orientation * (1/2) phi^j dF^2/dy^j.
inline Jet support_value(const Jet& f2, std::span<const Jet> phi, int orientation, std::size_t n) {
  Jet sum = constant_like(f2, 0.0);
  for (std::size_t j = 0; j < n; ++j) sum += phi[j] * f2.d(static_cast<int>(n + j));
  return sum * (0.5 * orientation);
}

/// The changed metric F^2 / (F - Phi), recomputed from scratch at each call.
class ChangedFunction final : public FinslerFunction {
 public:
  ChangedFunction(ModelFunction base, int orientation,
                  double margin_epsilon = kDefaultMarginEpsilon)
      : base_(std::move(base)), orientation_(orientation), eps_(margin_epsilon) {
    if (orientation != 1 && orientation != -1) {
      throw PreconditionError("orientation must be +1 or -1");
    }
  }

  const ModelFunction& base() const noexcept { return base_; }
  int orientation() const noexcept { return orientation_; }

  std::size_t dim() const override { return base_.dim(); }
  std::string name() const override { return base_.name() + "^"; }
  int order_loss() const override { return 1; }

  Jet squared(std::span<const Jet> coords) const override {
    const Jet f2 = base_.squared(coords);
    const Jet Phi = support_value(f2, base_.phi(coords), orientation_, dim());
    const Jet F = sqrt(f2);
    const Jet denom = F - Phi;
    if (!(denom.value() > 0.0)) throw OutsideHatDomain("F - Phi <= 0");
    return f2 * f2 / (denom * denom);
  }

  double squared(std::span<const double> coords) const override {
    const auto jets = seed(coords, 1);
    const Jet f2 = base_.squared(jets);
    const double Phi = support_value(f2, base_.phi(jets), orientation_, dim()).value();
    const double F = std::sqrt(f2.value());
    if (!(F - Phi > 0.0)) throw OutsideHatDomain("F - Phi <= 0");
    return f2.value() * f2.value() / ((F - Phi) * (F - Phi));
  }

  bool contains(std::span<const double> coords) const override {
    if (!base_.contains(coords)) return false;
    try {
      const auto jets = seed(coords, 2);
      const Jet f2 = base_.squared(jets);
      const auto phi = base_.phi(jets);
      const std::size_t n = dim();
      const double F = std::sqrt(f2.value());
      const double Phi = support_value(f2, phi, orientation_, n).value();
      if (!(F - Phi > kHatDomainTolerance * F)) return false;
      double p2 = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          p2 += 0.5 * f2.d(static_cast<int>(n + i)).d(static_cast<int>(n + j)).value() *
                phi[i].value() * phi[j].value();
      const double margin = F * (1.0 + 2.0 * p2) - 3.0 * Phi;
      return std::abs(margin) > eps_ * F;
    } catch (const Error&) {
      return false;
    }
  }

 private:
  std::vector<Jet> seed(std::span<const double> coords, int order) const {
    const std::size_t n = dim();
    return lift(coords.subspan(0, n), coords.subspan(n, n), order);
  }

  ModelFunction base_;
  int orientation_;
  double eps_;
};

}  // namespace finslerlab
