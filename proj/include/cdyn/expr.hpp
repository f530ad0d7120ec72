#pragma once

// Expression language: parser, printer, tape compiler and forward-mode
// derivative evaluation. Every partial derivative in the engine is computed
// by evaluating a Tape on Dual numbers.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdyn/dual.hpp"
#include "cdyn/error.hpp"

namespace cdyn::expr {

enum class Kind { Number, Pi, Var, Neg, Add, Sub, Mul, Div, Pow, Call };
enum class Func { Sin, Cos, Tan, Sqrt, Exp, Log, Abs };

struct Node;

/// Immutable expression tree handle. Cheap to copy; safe to share across threads.
class Expr {
 public:
  Expr() = default;

  static Expr number(double x);
  static Expr pi();
  static Expr var(std::string name);
  static Expr neg(Expr a);
  static Expr binary(Kind k, Expr a, Expr b);
  static Expr call(Func f, Expr a);

  Kind kind() const;
  double number_value() const;
  const std::string& name() const;
  Func func() const;
  const Expr& lhs() const;  // Neg/Call operand, or left operand
  const Expr& rhs() const;

  bool empty() const { return !node_; }
  const Node* node() const { return node_.get(); }

  friend bool operator==(const Expr& a, const Expr& b);  // structural

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

struct Node {
  Kind kind{Kind::Number};
  double number{0.0};
  std::string name;
  Func func{Func::Sin};
  Expr a;
  Expr b;
};

Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);

/// Parses `source` with precedence ^ > unary minus > * / > + -; ^ is right-associative.
Expr parse(std::string_view source);

/// Prints with the minimum parentheses needed for parse(to_string(e)) == e.
std::string to_string(const Expr& e);

std::set<std::string> free_vars(const Expr& e);

std::string_view func_name(Func f);
std::optional<Func> func_from_name(std::string_view name);

/// Polynomial degree of `e` in the given variables; a large sentinel when
/// `e` is not polynomial in them.
int polynomial_degree(const Expr& e, const std::set<std::string>& vars);
inline constexpr int kNonPolynomial = 1 << 20;

/// Name -> value environment. Looking up an unbound name throws UnboundVariable.
class Bindings {
 public:
  Bindings() = default;
  Bindings(std::initializer_list<std::pair<const std::string, double>> init) : values_(init) {}

  void set(const std::string& name, double v) { values_[name] = v; }
  double at(const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  const std::map<std::string, double>& values() const { return values_; }

 private:
  std::map<std::string, double> values_;
};

double eval(const Expr& e, const Bindings& env);

struct Derivatives {
  double value{};
  std::vector<double> gradient;
  std::vector<std::vector<double>> hessian;  // filled for order 2 only
};

/// Exact forward-mode derivatives with respect to `wrt` (order 1 or 2).
Derivatives eval_derivs(const Expr& e, const Bindings& env, const std::vector<std::string>& wrt,
                        int order);

/// Flat single-assignment program compiled from an Expr. Variables resolve to
/// slot indices or are folded to constants at compile time.
class Tape {
 public:
  using Resolver = std::function<std::optional<int>(const std::string&)>;

  Tape() = default;
  /// `slot_of` maps a variable to its slot; `constants` are folded in.
  /// Throws UnboundVariable for names neither resolves.
  Tape(const Expr& e, const Resolver& slot_of, const std::map<std::string, double>& constants = {});

  template <class T>
  T eval(std::span<const T> x) const;

  /// Derivative of the tape at x along `dir` (same length as x).
  template <class T>
  T directional(std::span<const T> x, std::span<const T> dir) const;

  /// Derivative with respect to slot i.
  template <class T>
  T partial(std::span<const T> x, int i) const;

  /// u^T (d^2 f) v at x.
  template <class T>
  T second_directional(std::span<const T> x, std::span<const T> u, std::span<const T> v) const;

  /// Mixed second partial with respect to slots i and j.
  template <class T>
  T second_partial(std::span<const T> x, int i, int j) const;

  /// True when slot i is referenced.
  bool uses_slot(int i) const;
  const Expr& source() const { return source_; }
  bool empty() const { return code_.empty(); }

 private:
  enum class Op : unsigned char { Const, Slot, Neg, Add, Sub, Mul, Div, PowConst, Pow, Sin, Cos, Tan, Sqrt, Exp, Log, Abs };
  struct Instr {
    Op op;
    int a{-1};
    int b{-1};
    double c{0.0};  // constant value or constant exponent
    const Node* node{nullptr};
  };
  int emit(const Expr& e, const Resolver& slot_of, const std::map<std::string, double>& constants);
  [[noreturn]] void domain_error(const Instr& in) const;

  std::vector<Instr> code_;
  Expr source_;
};

// ---------------------------------------------------------------------------

template <class T>
T Tape::eval(std::span<const T> x) const {
  using std::sin, std::cos, std::tan, std::sqrt, std::exp, std::log, std::abs, std::pow, std::floor;
  thread_local std::vector<T> r;
  r.resize(code_.size());
  for (std::size_t i = 0; i < code_.size(); ++i) {
    const Instr& in = code_[i];
    switch (in.op) {
      case Op::Const: r[i] = T(in.c); break;
      case Op::Slot: r[i] = x[static_cast<std::size_t>(in.a)]; break;
      case Op::Neg: r[i] = -r[in.a]; break;
      case Op::Add: r[i] = r[in.a] + r[in.b]; break;
      case Op::Sub: r[i] = r[in.a] - r[in.b]; break;
      case Op::Mul: r[i] = r[in.a] * r[in.b]; break;
      case Op::Div:
        if (value_of(r[in.b]) == 0.0) domain_error(in);
        r[i] = r[in.a] / r[in.b];
        break;
      case Op::PowConst: {
        double base = value_of(r[in.a]);
        bool integral = in.c == floor(in.c);
        if ((base < 0.0 && !integral) || (base == 0.0 && in.c < 0.0)) domain_error(in);
        r[i] = pow(r[in.a], in.c);
        break;
      }
      case Op::Pow: {
        double base = value_of(r[in.a]);
        double ex = value_of(r[in.b]);
        bool integral = ex == floor(ex);
        if ((base < 0.0 && !integral) || (base == 0.0 && ex <= 0.0)) domain_error(in);
        if constexpr (std::is_same_v<T, double>) {
          r[i] = pow(r[in.a], r[in.b]);
        } else {
          if (base <= 0.0 && !exactly_zero(r[in.b].d)) domain_error(in);
          r[i] = pow(r[in.a], r[in.b]);
        }
        break;
      }
      case Op::Sin: r[i] = sin(r[in.a]); break;
      case Op::Cos: r[i] = cos(r[in.a]); break;
      case Op::Tan: r[i] = tan(r[in.a]); break;
      case Op::Sqrt:
        if (value_of(r[in.a]) < 0.0) domain_error(in);
        r[i] = sqrt(r[in.a]);
        break;
      case Op::Exp: r[i] = exp(r[in.a]); break;
      case Op::Log:
        if (value_of(r[in.a]) <= 0.0) domain_error(in);
        r[i] = log(r[in.a]);
        break;
      case Op::Abs: r[i] = abs(r[in.a]); break;
    }
  }
  return r.back();
}

template <class T>
T Tape::directional(std::span<const T> x, std::span<const T> dir) const {
  std::vector<Dual<T>> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = Dual<T>(x[i], dir[i]);
  return eval<Dual<T>>(std::span<const Dual<T>>(y)).d;
}

template <class T>
T Tape::partial(std::span<const T> x, int i) const {
  std::vector<Dual<T>> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = Dual<T>(x[k], T(0.0));
  y[static_cast<std::size_t>(i)].d = T(1.0);
  return eval<Dual<T>>(std::span<const Dual<T>>(y)).d;
}

template <class T>
T Tape::second_directional(std::span<const T> x, std::span<const T> u, std::span<const T> v) const {
  using D2 = Dual<Dual<T>>;
  std::vector<D2> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    y[k] = D2(Dual<T>(x[k], v[k]), Dual<T>(u[k], T(0.0)));
  }
  return eval<D2>(std::span<const D2>(y)).d.d;
}

template <class T>
T Tape::second_partial(std::span<const T> x, int i, int j) const {
  using D2 = Dual<Dual<T>>;
  std::vector<D2> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = D2(Dual<T>(x[k], T(0.0)), Dual<T>(T(0.0), T(0.0)));
  y[static_cast<std::size_t>(j)].v.d = T(1.0);
  y[static_cast<std::size_t>(i)].d.v = T(1.0);
  return eval<D2>(std::span<const D2>(y)).d.d;
}

}  // namespace cdyn::expr
