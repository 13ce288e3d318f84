#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace finslerlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model source. Line and column are 1-based.
class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, const std::string& what)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// Well-formed source that violates a model rule (y in phi, bad dim, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Arithmetic failure while evaluating an expression.
class EvalError : public Error {
 public:
  using Error::Error;
};

/// A point (or stencil point, or trajectory state) left the model domain.
class DomainEscape : public Error {
 public:
  explicit DomainEscape(const std::string& what,
                        double time = std::numeric_limits<double>::quiet_NaN())
      : Error(what), time_(time) {}

  /// Exit time for geodesic integration, NaN otherwise.
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class SingularMetric : public Error {
 public:
  using Error::Error;
};

/// F - Phi <= 0: the point is outside the domain of the changed metric.
class OutsideHatDomain : public Error {
 public:
  using Error::Error;
};

/// |F(1+2p^2) - 3 Phi| / F below the configured threshold.
class DegenerateMargin : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace finslerlab
