#pragma once

// Forward-mode dual numbers. Dual<T> carries one directional derivative;
// nesting (Dual<Dual<double>>) gives mixed second derivatives, and so on.

#include <cmath>
#include <type_traits>

namespace cdyn {

template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative along the seeded direction

  constexpr Dual() = default;
  constexpr Dual(double x) : v(x), d(0.0) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(T value, T deriv) : v(std::move(value)), d(std::move(deriv)) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
  Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
  friend Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    T q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
  }

  // Comparisons look at the value only.
  friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
  friend bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }
  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// Nesting depth: 0 for double, 1 for Dual<double>, ...
template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class T>
struct dual_depth<Dual<T>> : std::integral_constant<int, 1 + dual_depth<T>::value> {};

inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) { return value_of(x.v); }

/// True when every component (value and all derivative parts) is exactly zero.
inline bool exactly_zero(double x) { return x == 0.0; }
template <class T>
bool exactly_zero(const Dual<T>& x) { return exactly_zero(x.v) && exactly_zero(x.d); }

inline bool all_finite(double x) { return std::isfinite(x); }
template <class T>
bool all_finite(const Dual<T>& x) { return all_finite(x.v) && all_finite(x.d); }

// Elementary functions. The double overloads live in std; these are found by ADL.
template <class T>
Dual<T> sin(const Dual<T>& x) { using std::sin, std::cos; return {sin(x.v), cos(x.v) * x.d}; }
template <class T>
Dual<T> cos(const Dual<T>& x) { using std::sin, std::cos; return {cos(x.v), -(sin(x.v) * x.d)}; }
template <class T>
Dual<T> tan(const Dual<T>& x) {
  using std::tan, std::cos;
  T c = cos(x.v);
  return {tan(x.v), x.d / (c * c)};
}
template <class T>
Dual<T> exp(const Dual<T>& x) { using std::exp; T e = exp(x.v); return {e, e * x.d}; }
template <class T>
Dual<T> log(const Dual<T>& x) { using std::log; return {log(x.v), x.d / x.v}; }
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  T s = sqrt(x.v);
  return {s, x.d / (2.0 * s)};
}
template <class T>
Dual<T> abs(const Dual<T>& x) { return value_of(x) < 0.0 ? -x : x; }

/// x^e for a constant exponent e.
template <class T>
Dual<T> pow(const Dual<T>& x, double e) {
  using std::pow;
  if (e == 0.0) return Dual<T>(1.0);
  if (e == 1.0) return x;
  if (e == 2.0) return x * x;
  return {pow(x.v, e), e * pow(x.v, e - 1.0) * x.d};
}

/// x^y with both operands active. The log-term is dropped when y's derivative
/// part is exactly zero, so negative bases with integer exponents stay finite.
template <class T>
Dual<T> pow(const Dual<T>& x, const Dual<T>& y) {
  using std::pow, std::log;
  T val = pow(x.v, y.v);
  T dx = y.v * pow(x.v, y.v - 1.0) * x.d;
  if (exactly_zero(y.d)) return {val, dx};
  return {val, dx + val * log(x.v) * y.d};
}

}  // namespace cdyn
