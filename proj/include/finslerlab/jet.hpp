#pragma once

// Truncated multivariate Taylor arithmetic.
//
// A Jet stores the Taylor coefficients c_a = (d^a f)(p) / a! of a function
// of `nvars` variables about a point p, for every multi-index a with
// |a| <= order. Arithmetic and elementary functions propagate the exact
// truncated expansion, so every stored coefficient is exact up to rounding.
//
// Each jet also carries a *valid order*. Differentiating a jet of valid
// order k yields one of valid order k-1; binary operations keep the minimum.
// Reading a coefficient above the valid order is an error, which keeps
// silently-truncated derivatives out of the geometry code.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "finslerlab/error.hpp"

namespace finslerlab {

using MultiIndex = std::vector<int>;

inline int degree(const MultiIndex& a) {
  int d = 0;
  for (int v : a) d += v;
  return d;
}

/// Shared tables for jets with a given variable count and truncation order.
/// Instances are interned and live for the whole program.
class JetSpace {
 public:
  struct Product {
    std::size_t lhs;
    std::size_t rhs;
    std::size_t out;
  };

  static const JetSpace& get(int nvars, int order) {
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::unique_ptr<JetSpace>> spaces;
    if (nvars < 1 || order < 0) {
      throw PreconditionError("JetSpace: need nvars >= 1 and order >= 0");
    }
    std::lock_guard lock(mutex);
    auto& slot = spaces[{nvars, order}];
    if (!slot) slot.reset(new JetSpace(nvars, order));
    return *slot;
  }

  int nvars() const noexcept { return nvars_; }
  int order() const noexcept { return order_; }
  std::size_t size() const noexcept { return indices_.size(); }

  const MultiIndex& index(std::size_t slot) const { return indices_[slot]; }
  int degree_of(std::size_t slot) const { return degrees_[slot]; }

  /// Number of slots whose degree is <= d (slots are graded).
  std::size_t count_upto(int d) const {
    if (d < 0) return 0;
    return prefix_[static_cast<std::size_t>(std::min(d, order_))];
  }

  /// Slot of a multi-index, or -1 when its degree exceeds the order.
  long slot_of(const MultiIndex& a) const {
    auto it = lookup_.find(a);
    return it == lookup_.end() ? -1 : static_cast<long>(it->second);
  }

  /// Slot of (index(slot) + e_var), or -1 when beyond the order.
  long raised(std::size_t slot, int var) const {
    return raise_[slot * static_cast<std::size_t>(nvars_) +
                  static_cast<std::size_t>(var)];
  }

  /// a! for the multi-index stored at `slot`.
  double factorial(std::size_t slot) const { return factorials_[slot]; }

  /// Product triples whose output slot has degree exactly d.
  std::span<const Product> products(int d) const { return products_[d]; }

 private:
  JetSpace(int nvars, int order) : nvars_(nvars), order_(order) {
    MultiIndex current(static_cast<std::size_t>(nvars), 0);
    for (int d = 0; d <= order; ++d) {
      enumerate(current, 0, d);
      prefix_.push_back(indices_.size());
    }
    for (std::size_t s = 0; s < indices_.size(); ++s) {
      lookup_[indices_[s]] = s;
      degrees_.push_back(degree(indices_[s]));
      double f = 1.0;
      for (int v : indices_[s]) {
        for (int k = 2; k <= v; ++k) f *= k;
      }
      factorials_.push_back(f);
    }
    raise_.assign(indices_.size() * static_cast<std::size_t>(nvars), -1);
    for (std::size_t s = 0; s < indices_.size(); ++s) {
      for (int v = 0; v < nvars; ++v) {
        MultiIndex up = indices_[s];
        ++up[static_cast<std::size_t>(v)];
        raise_[s * static_cast<std::size_t>(nvars) + static_cast<std::size_t>(v)] =
            slot_of(up);
      }
    }
    products_.resize(static_cast<std::size_t>(order) + 1);
    for (std::size_t a = 0; a < indices_.size(); ++a) {
      for (std::size_t b = 0; b < count_upto(order - degrees_[a]); ++b) {
        MultiIndex sum = indices_[a];
        for (int v = 0; v < nvars; ++v) {
          sum[static_cast<std::size_t>(v)] += indices_[b][static_cast<std::size_t>(v)];
        }
        const auto out = static_cast<std::size_t>(slot_of(sum));
        products_[static_cast<std::size_t>(degrees_[a] + degrees_[b])].push_back(
            {a, b, out});
      }
    }
  }

  // Graded reverse-lexicographic enumeration of all indices of degree d.
  void enumerate(MultiIndex& current, int var, int remaining) {
    if (var == nvars_ - 1) {
      current[static_cast<std::size_t>(var)] = remaining;
      indices_.push_back(current);
      current[static_cast<std::size_t>(var)] = 0;
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      current[static_cast<std::size_t>(var)] = k;
      enumerate(current, var + 1, remaining - k);
    }
    current[static_cast<std::size_t>(var)] = 0;
  }

  int nvars_;
  int order_;
  std::vector<MultiIndex> indices_;
  std::vector<int> degrees_;
  std::vector<std::size_t> prefix_;
  std::vector<double> factorials_;
  std::vector<long> raise_;
  std::map<MultiIndex, std::size_t> lookup_;
  std::vector<std::vector<Product>> products_;
};

class Jet {
 public:
  /// Constant jet, valid to the full order of the space.
  Jet(const JetSpace& space, double value)
      : space_(&space), order_(space.order()), c_(space.size(), 0.0) {
    c_[0] = value;
  }

  /// Independent variable `var` seeded at `value`.
  static Jet variable(const JetSpace& space, int var, double value) {
    Jet j(space, value);
    if (space.order() >= 1) {
      MultiIndex e(static_cast<std::size_t>(space.nvars()), 0);
      e[static_cast<std::size_t>(var)] = 1;
      j.c_[static_cast<std::size_t>(space.slot_of(e))] = 1.0;
    }
    return j;
  }

  const JetSpace& space() const noexcept { return *space_; }
  int order() const noexcept { return order_; }
  double value() const noexcept { return c_[0]; }

  /// Taylor coefficient d^a f / a!.
  double coefficient(const MultiIndex& a) const {
    check_readable(a);
    return c_[static_cast<std::size_t>(space_->slot_of(a))];
  }

  /// Partial derivative d^a f.
  double derivative(const MultiIndex& a) const {
    check_readable(a);
    const auto s = static_cast<std::size_t>(space_->slot_of(a));
    return c_[s] * space_->factorial(s);
  }

  std::span<const double> coefficients() const noexcept { return c_; }

  /// d/d(var), valid to one order less.
  Jet d(int var) const {
    if (order_ < 1) {
      throw PreconditionError("Jet::d: jet has no derivative information left");
    }
    Jet out(*space_, 0.0);
    out.order_ = order_ - 1;
    const std::size_t n = space_->count_upto(out.order_);
    for (std::size_t s = 0; s < n; ++s) {
      const long up = space_->raised(s, var);
      const int k = space_->index(s)[static_cast<std::size_t>(var)] + 1;
      out.c_[s] = k * c_[static_cast<std::size_t>(up)];
    }
    return out;
  }

  Jet operator-() const {
    Jet out = *this;
    for (double& v : out.c_) v = -v;
    return out;
  }

  Jet& operator+=(const Jet& o) {
    check_space(o);
    order_ = std::min(order_, o.order_);
    const std::size_t n = space_->count_upto(order_);
    for (std::size_t s = 0; s < n; ++s) c_[s] += o.c_[s];
    truncate();
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    check_space(o);
    order_ = std::min(order_, o.order_);
    const std::size_t n = space_->count_upto(order_);
    for (std::size_t s = 0; s < n; ++s) c_[s] -= o.c_[s];
    truncate();
    return *this;
  }
  Jet& operator*=(const Jet& o) {
    *this = *this * o;
    return *this;
  }
  Jet& operator/=(const Jet& o) {
    *this = *this / o;
    return *this;
  }
  Jet& operator+=(double v) {
    c_[0] += v;
    return *this;
  }
  Jet& operator-=(double v) {
    c_[0] -= v;
    return *this;
  }
  Jet& operator*=(double v) {
    for (double& x : c_) x *= v;
    return *this;
  }
  Jet& operator/=(double v) {
    if (std::abs(v) < kTiny) throw EvalError("division by zero");
    for (double& x : c_) x /= v;
    return *this;
  }

  friend Jet operator*(const Jet& a, const Jet& b) {
    a.check_space(b);
    Jet out(*a.space_, 0.0);
    out.order_ = std::min(a.order_, b.order_);
    for (int d = 0; d <= out.order_; ++d) {
      for (const auto& p : a.space_->products(d)) {
        out.c_[p.out] += a.c_[p.lhs] * b.c_[p.rhs];
      }
    }
    return out;
  }

  friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double b) { return a += b; }
  friend Jet operator+(double a, Jet b) { return b += a; }
  friend Jet operator-(Jet a, double b) { return a -= b; }
  friend Jet operator-(double a, const Jet& b) { return (-b) += a; }
  friend Jet operator*(Jet a, double b) { return a *= b; }
  friend Jet operator*(double a, Jet b) { return b *= a; }
  friend Jet operator/(Jet a, double b) { return a /= b; }
  friend Jet operator/(double a, const Jet& b) { return reciprocal(b) *= a; }

  /// f(jet) given t[k] = f^(k)(value) / k!, k = 0..order.
  friend Jet compose(const Jet& x, std::span<const double> t) {
    Jet h = x;
    h.c_[0] = 0.0;
    Jet out(*x.space_, t[static_cast<std::size_t>(x.order_)]);
    out.order_ = x.order_;
    for (int k = x.order_ - 1; k >= 0; --k) {
      out = out * h;
      out.c_[0] += t[static_cast<std::size_t>(k)];
    }
    return out;
  }

  friend Jet reciprocal(const Jet& x) {
    const double a = x.value();
    if (std::abs(a) < kTiny) throw EvalError("division by zero");
    std::vector<double> t(static_cast<std::size_t>(x.order_) + 1);
    double p = 1.0 / a;
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = (k % 2 == 0 ? p : -p);
      p /= a;
    }
    return compose(x, t);
  }

  /// x^p for real p, requires x > 0 unless the jet is a pure value.
  friend Jet real_pow(const Jet& x, double p) {
    const double a = x.value();
    if (!(a > 0.0)) {
      throw EvalError("non-integer power of a non-positive base");
    }
    std::vector<double> t(static_cast<std::size_t>(x.order_) + 1);
    double binom = 1.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = binom * std::pow(a, p - static_cast<double>(k));
      binom *= (p - static_cast<double>(k)) / static_cast<double>(k + 1);
    }
    return compose(x, t);
  }

  friend Jet sqrt(const Jet& x) {
    if (x.value() < 0.0) throw EvalError("sqrt of a negative value");
    if (x.value() == 0.0) {
      if (x.order_ == 0) return x;
      throw EvalError("sqrt is not differentiable at zero");
    }
    return real_pow(x, 0.5);
  }

  friend Jet exp(const Jet& x) {
    std::vector<double> t(static_cast<std::size_t>(x.order_) + 1);
    double e = std::exp(x.value());
    for (std::size_t k = 0; k < t.size(); ++k) {
      t[k] = e;
      e /= static_cast<double>(k + 1);
    }
    return compose(x, t);
  }

  friend Jet log(const Jet& x) {
    const double a = x.value();
    if (!(a > 0.0)) throw EvalError("log of a non-positive value");
    std::vector<double> t(static_cast<std::size_t>(x.order_) + 1);
    t[0] = std::log(a);
    double p = 1.0 / a;
    for (std::size_t k = 1; k < t.size(); ++k) {
      t[k] = (k % 2 == 1 ? p : -p) / static_cast<double>(k);
      p /= a;
    }
    return compose(x, t);
  }

  friend Jet sin(const Jet& x) { return trig(x, 0); }
  friend Jet cos(const Jet& x) { return trig(x, 1); }

  friend Jet abs(const Jet& x) {
    if (x.value() == 0.0 && x.order_ > 0) {
      throw EvalError("abs is not differentiable at zero");
    }
    return x.value() < 0.0 ? -x : x;
  }

  /// Integer power by repeated squaring; defined for any base when n >= 0.
  friend Jet int_pow(const Jet& x, long n) {
    if (n < 0) return reciprocal(int_pow(x, -n));
    Jet result(*x.space_, 1.0);
    result.order_ = x.order_;
    Jet base = x;
    while (n > 0) {
      if (n & 1) result = result * base;
      n >>= 1;
      if (n > 0) base = base * base;
    }
    return result;
  }

 private:
  static constexpr double kTiny = 1e-300;

  // shift 0: sin, shift 1: cos. The k-th derivative of sin is sin(a + k pi/2).
  static Jet trig(const Jet& x, int shift) {
    const double s = std::sin(x.value());
    const double c = std::cos(x.value());
    const std::array<double, 4> cycle{s, c, -s, -c};
    std::vector<double> t(static_cast<std::size_t>(x.order_) + 1);
    double fact = 1.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (k > 0) fact *= static_cast<double>(k);
      t[k] = cycle[(k + static_cast<std::size_t>(shift)) % 4] / fact;
    }
    return compose(x, t);
  }

  void check_space(const Jet& o) const {
    if (space_ != o.space_) throw PreconditionError("Jet: mixing jet spaces");
  }

  void check_readable(const MultiIndex& a) const {
    if (static_cast<int>(a.size()) != space_->nvars()) {
      throw PreconditionError("Jet: multi-index has the wrong length");
    }
    if (degree(a) > order_) {
      throw PreconditionError("Jet: derivative order exceeds the valid order");
    }
  }

  void truncate() {
    const std::size_t n = space_->count_upto(order_);
    std::fill(c_.begin() + static_cast<std::ptrdiff_t>(n), c_.end(), 0.0);
  }

  const JetSpace* space_;
  int order_;
  std::vector<double> c_;
};

// Scalar-generic helpers so templated numerics can treat double and Jet alike.

inline double value_of(double v) { return v; }
inline double value_of(const Jet& j) { return j.value(); }

inline double constant_like(double, double c) { return c; }
inline Jet constant_like(const Jet& proto, double c) { return Jet(proto.space(), c); }

inline double int_pow(double x, long n) {
  if (x == 0.0 && n < 0) throw EvalError("zero raised to a negative power");
  return std::pow(x, static_cast<double>(n));
}

inline double real_pow(double x, double p) {
  if (!(x > 0.0)) throw EvalError("non-integer power of a non-positive base");
  return std::exp(p * std::log(x));
}

/// Seed 2n jet coordinates at (x, y): variables 0..n-1 are x, n..2n-1 are y.
inline std::vector<Jet> lift(std::span<const double> x, std::span<const double> y,
                             int order) {
  if (order < 1) throw PreconditionError("lift: order must be >= 1");
  if (x.size() != y.size()) throw PreconditionError("lift: x and y differ in size");
  const int n = static_cast<int>(x.size());
  const JetSpace& space = JetSpace::get(2 * n, order);
  std::vector<Jet> out;
  out.reserve(static_cast<std::size_t>(2 * n));
  for (int k = 0; k < n; ++k) out.push_back(Jet::variable(space, k, x[static_cast<std::size_t>(k)]));
  for (int k = 0; k < n; ++k) {
    out.push_back(Jet::variable(space, n + k, y[static_cast<std::size_t>(k)]));
  }
  return out;
}

}  // namespace finslerlab
