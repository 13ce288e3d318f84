#pragma once

// Expression language for model definitions.
//
//   expr    := term   (('+' | '-') term)*
//   term    := unary  (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | x<k> | y<k> | param | func '(' expr ')' | '(' expr ')'
//   func    := sqrt | abs | sin | cos | exp | log
//
// Precedence, tightest first: ^, unary minus, * /, + -. So -x^2 is -(x^2)
// and 2^-1 is 0.5. Whitespace is insignificant.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "finslerlab/error.hpp"
#include "finslerlab/jet.hpp"

namespace finslerlab {

enum class Op { Number, VarX, VarY, Param, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sqrt, Abs, Sin, Cos, Exp, Log };

struct Node;
using Ast = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Number;
  double number = 0.0;    // Number
  int index = 0;          // VarX / VarY: 1-based coordinate; Param: slot
  std::string name;       // Param
  Func func = Func::Sqrt; // Call
  Ast lhs;                // unary operand, or left operand
  Ast rhs;
};

namespace ast {

inline Ast number(double v) {
  auto n = std::make_shared<Node>();
  n->number = v;
  return n;
}
inline Ast var_x(int k) {
  auto n = std::make_shared<Node>();
  n->op = Op::VarX;
  n->index = k;
  return n;
}
inline Ast var_y(int k) {
  auto n = std::make_shared<Node>();
  n->op = Op::VarY;
  n->index = k;
  return n;
}
inline Ast param(std::string name, int slot) {
  auto n = std::make_shared<Node>();
  n->op = Op::Param;
  n->name = std::move(name);
  n->index = slot;
  return n;
}
inline Ast unary(Op op, Ast a) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  return n;
}
inline Ast binary(Op op, Ast a, Ast b) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}
inline Ast call(Func f, Ast a) {
  auto n = std::make_shared<Node>();
  n->op = Op::Call;
  n->func = f;
  n->lhs = std::move(a);
  return n;
}

}  // namespace ast

inline const char* func_name(Func f) {
  switch (f) {
    case Func::Sqrt: return "sqrt";
    case Func::Abs: return "abs";
    case Func::Sin: return "sin";
    case Func::Cos: return "cos";
    case Func::Exp: return "exp";
    case Func::Log: return "log";
  }
  return "?";
}

/// Structural equality.
inline bool equal(const Ast& a, const Ast& b) {
  if (!a || !b) return !a && !b;
  if (a->op != b->op) return false;
  switch (a->op) {
    case Op::Number: return a->number == b->number;
    case Op::VarX:
    case Op::VarY: return a->index == b->index;
    case Op::Param: return a->name == b->name;
    case Op::Call: return a->func == b->func && equal(a->lhs, b->lhs);
    default: return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
  }
}

/// Longest root-to-leaf path counted in edges; a lone leaf has depth 0.
inline int depth(const Ast& a) {
  if (!a || (!a->lhs && !a->rhs)) return 0;
  return 1 + std::max(depth(a->lhs), depth(a->rhs));
}

/// Highest x and y indices used (0 when absent).
struct VariableUse {
  int max_x = 0;
  int max_y = 0;
};

inline void collect_variables(const Ast& a, VariableUse& use) {
  if (!a) return;
  if (a->op == Op::VarX) use.max_x = std::max(use.max_x, a->index);
  if (a->op == Op::VarY) use.max_y = std::max(use.max_y, a->index);
  collect_variables(a->lhs, use);
  collect_variables(a->rhs, use);
}

inline VariableUse variables_of(const Ast& a) {
  VariableUse use;
  collect_variables(a, use);
  return use;
}

namespace detail {

inline int precedence(const Ast& a) {
  switch (a->op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    case Op::Number: return a->number < 0.0 || std::signbit(a->number) ? 0 : 5;
    default: return 5;
  }
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string print_at(const Ast& a, int min_level);

inline std::string print_node(const Ast& a) {
  switch (a->op) {
    case Op::Number: return format_number(a->number);
    case Op::VarX: return "x" + std::to_string(a->index);
    case Op::VarY: return "y" + std::to_string(a->index);
    case Op::Param: return a->name;
    case Op::Call: return std::string(func_name(a->func)) + "(" + print_at(a->lhs, 0) + ")";
    case Op::Neg: return "-" + print_at(a->lhs, 4);
    case Op::Add: return print_at(a->lhs, 1) + " + " + print_at(a->rhs, 2);
    case Op::Sub: return print_at(a->lhs, 1) + " - " + print_at(a->rhs, 2);
    case Op::Mul: return print_at(a->lhs, 2) + "*" + print_at(a->rhs, 3);
    case Op::Div: return print_at(a->lhs, 2) + "/" + print_at(a->rhs, 3);
    case Op::Pow: return print_at(a->lhs, 5) + "^" + print_at(a->rhs, 3);
  }
  return {};
}

inline std::string print_at(const Ast& a, int min_level) {
  const std::string s = print_node(a);
  return precedence(a) < min_level ? "(" + s + ")" : s;
}

}  // namespace detail

/// Source text that parses back to a structurally equal tree.
inline std::string print(const Ast& a) { return detail::print_at(a, 0); }

/// Resolves identifiers that are neither coordinates nor functions.
using ParamLookup = std::function<std::optional<int>(const std::string&)>;

class Parser {
 public:
  /// `line` and `column_offset` position diagnostics inside a model file.
  Parser(std::string_view text, ParamLookup params = {}, int line = 1,
         int column_offset = 0)
      : text_(text), params_(std::move(params)), line_(line), col0_(column_offset) {}

  Ast parse() {
    Ast e = expression();
    skip_space();
    if (pos_ < text_.size()) fail("expected operator or end of expression");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw SyntaxError(line_, col0_ + static_cast<int>(pos_) + 1, what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Ast expression() {
    Ast lhs = term();
    while (true) {
      if (accept('+')) {
        lhs = ast::binary(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = ast::binary(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Ast term() {
    Ast lhs = unary();
    while (true) {
      if (accept('*')) {
        lhs = ast::binary(Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = ast::binary(Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  Ast unary() {
    if (accept('-')) return ast::unary(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  Ast power() {
    Ast base = primary();
    if (accept('^')) return ast::binary(Op::Pow, base, unary());
    return base;
  }

  Ast primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("expected number, variable, function or '('");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Ast inner = expression();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail(std::string("unexpected character '") + c +
         "', expected number, variable, function or '('");
  }

  Ast number() {
    const char* begin = text_.data() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    return ast::number(v);
  }

  Ast identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string id(text_.substr(start, pos_ - start));
    static const std::map<std::string, Func> funcs{
        {"sqrt", Func::Sqrt}, {"abs", Func::Abs}, {"sin", Func::Sin},
        {"cos", Func::Cos},   {"exp", Func::Exp}, {"log", Func::Log}};
    if (auto it = funcs.find(id); it != funcs.end()) {
      if (!accept('(')) fail("expected '(' after " + id);
      Ast arg = expression();
      if (!accept(')')) fail("expected ')'");
      return ast::call(it->second, arg);
    }
    if (auto k = coordinate_index(id)) {
      return id[0] == 'x' ? ast::var_x(*k) : ast::var_y(*k);
    }
    if (params_) {
      if (auto slot = params_(id)) return ast::param(id, *slot);
    }
    throw ValidationError("line " + std::to_string(line_) + ", column " +
                          std::to_string(col0_ + static_cast<int>(start) + 1) +
                          ": undeclared variable '" + id + "'");
  }

 public:
  /// k for identifiers of the form x<k> / y<k> with k >= 1.
  static std::optional<int> coordinate_index(const std::string& id) {
    if (id.size() < 2 || (id[0] != 'x' && id[0] != 'y')) return std::nullopt;
    for (std::size_t i = 1; i < id.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(id[i]))) return std::nullopt;
    }
    if (id[1] == '0') return std::nullopt;
    if (id.size() > 6) return std::nullopt;
    return std::stoi(id.substr(1));
  }

 private:
  std::string_view text_;
  ParamLookup params_;
  int line_;
  int col0_;
  std::size_t pos_ = 0;
};

inline Ast parse_expression(std::string_view text, ParamLookup params = {}) {
  return Parser(text, std::move(params)).parse();
}

namespace detail {

inline constexpr double kTinyDivisor = 1e-300;

template <class T>
T divide(const T& a, const T& b) {
  if (std::abs(value_of(b)) < kTinyDivisor) throw EvalError("division by zero");
  return a / b;
}

// Constant subtree (no coordinates) evaluated to a double.
inline std::optional<double> constant_value(const Ast& a, std::span<const double> params);

}  // namespace detail

/// Evaluate `a` at coords = (x1..xn, y1..yn); x-only trees accept just x.
/// T is double or Jet.
template <class T>
T evaluate(const Ast& a, std::span<const T> coords, std::size_t dim,
           std::span<const double> params = {}) {
  if (coords.empty()) throw PreconditionError("evaluate: no coordinates");
  const T& proto = coords[0];
  switch (a->op) {
    case Op::Number: return constant_like(proto, a->number);
    case Op::VarX: {
      const auto k = static_cast<std::size_t>(a->index - 1);
      if (k >= dim || k >= coords.size()) throw EvalError("x index out of range");
      return coords[k];
    }
    case Op::VarY: {
      const auto k = dim + static_cast<std::size_t>(a->index - 1);
      if (static_cast<std::size_t>(a->index) > dim || k >= coords.size()) {
        throw EvalError("y index out of range");
      }
      return coords[k];
    }
    case Op::Param: {
      const auto k = static_cast<std::size_t>(a->index);
      if (k >= params.size()) throw EvalError("unbound parameter " + a->name);
      return constant_like(proto, params[k]);
    }
    case Op::Neg: return -evaluate(a->lhs, coords, dim, params);
    case Op::Add: return evaluate(a->lhs, coords, dim, params) + evaluate(a->rhs, coords, dim, params);
    case Op::Sub: return evaluate(a->lhs, coords, dim, params) - evaluate(a->rhs, coords, dim, params);
    case Op::Mul: return evaluate(a->lhs, coords, dim, params) * evaluate(a->rhs, coords, dim, params);
    case Op::Div:
      return detail::divide(evaluate(a->lhs, coords, dim, params),
                            evaluate(a->rhs, coords, dim, params));
    case Op::Pow: {
      const T base = evaluate(a->lhs, coords, dim, params);
      if (auto e = detail::constant_value(a->rhs, params)) {
        const double r = std::round(*e);
        if (r == *e && std::abs(r) < 2147483648.0) {
          if (value_of(base) == 0.0 && r < 0.0) throw EvalError("zero raised to a negative power");
          return int_pow(base, static_cast<long>(r));
        }
        return real_pow(base, *e);
      }
      if (!(value_of(base) > 0.0)) throw EvalError("non-integer power of a non-positive base");
      using std::exp;
      using std::log;
      return exp(evaluate(a->rhs, coords, dim, params) * log(base));
    }
    case Op::Call: {
      using std::abs;
      using std::cos;
      using std::exp;
      using std::log;
      using std::sin;
      using std::sqrt;
      const T v = evaluate(a->lhs, coords, dim, params);
      switch (a->func) {
        case Func::Sqrt:
          if (value_of(v) < 0.0) throw EvalError("sqrt of a negative value");
          return sqrt(v);
        case Func::Abs: return abs(v);
        case Func::Sin: return sin(v);
        case Func::Cos: return cos(v);
        case Func::Exp: return exp(v);
        case Func::Log:
          if (!(value_of(v) > 0.0)) throw EvalError("log of a non-positive value");
          return log(v);
      }
    }
  }
  throw EvalError("malformed expression tree");
}

namespace detail {

inline bool has_coordinates(const Ast& a) {
  if (!a) return false;
  if (a->op == Op::VarX || a->op == Op::VarY) return true;
  return has_coordinates(a->lhs) || has_coordinates(a->rhs);
}

inline std::optional<double> constant_value(const Ast& a, std::span<const double> params) {
  if (has_coordinates(a)) return std::nullopt;
  const double dummy = 0.0;
  return evaluate<double>(a, std::span<const double>(&dummy, 1), 0, params);
}

}  // namespace detail

}  // namespace finslerlab
