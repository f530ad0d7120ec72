#pragma once

// Generalized transposition data and the extended Poisson / Flannery brackets.
//
//   A_kj = dg_k/dq_dot^j
//   G_kj = d/dt(dg_k/dq_dot^j) - dg_k/dq^j
//   A f  = G,   f^j_i  relates  (delta q_dot^j - d/dt delta q^j)  to  delta q^i

#include <string_view>

#include "cdyn/model.hpp"

namespace cdyn {

struct TranspositionField {
  MatrixXd A;  // m x n
  MatrixXd G;  // m x n
  MatrixXd f;  // n x n, f(j, i) = f^j_i
  double residual{0.0};  // ||A f - G||_inf
};

MatrixXd velocity_jacobian(const System& sys, const ConfigState& cs, const VectorXd& lam);

/// G at (q, q_dot, t); `qdd` supplies the accelerations of the total time derivative.
MatrixXd gkj_matrix(const System& sys, const ConfigState& cs, const VectorXd& qdd);

/// Minimum-norm least-squares solution f = A+ G.
TranspositionField solve_f(const MatrixXd& A, const MatrixXd& G);

/// Minimum-norm f subject to A f = G and to momentum compatibility
/// P . (f dq) = 0 for every admissible dq (A dq = 0), where P = dL/dq_dot.
/// Identical to solve_f when A = 0 or G = 0.
TranspositionField solve_f_compatible(const MatrixXd& A, const MatrixXd& G, const VectorXd& P);

/// Gradient of a phase-space function with respect to (q, p, lam, p_lam, t).
struct PhaseGradient {
  VectorXd dq;
  VectorXd dp;
  VectorXd dlam;
  VectorXd dplam;
  double dt{0.0};
};

/// Differentiable scalar on extended phase space, written over the names
/// q, p_<q>, lam_<k>, plam_<k> and t.
class Observable {
 public:
  Observable(const System& sys, expr::Expr e);
  Observable(const System& sys, std::string_view source);

  const expr::Expr& expression() const { return tape_.source(); }
  /// Tape over slots [q, p, lam, plam, t].
  const expr::Tape& tape() const { return tape_; }
  VectorXd slots(const PhaseState& s) const;
  double value(const PhaseState& s) const;
  PhaseGradient gradient(const PhaseState& s) const;

 private:
  int n_;
  int m_;
  expr::Tape tape_;
};

/// Fault injection for the invariant harness: adds `offset` to f(0, 0) of
/// every solve_f result. Zero disables it.
void inject_solve_f_fault(double offset);

/// Extended Poisson bracket of two gradients.
double poisson(const PhaseGradient& x, const PhaseGradient& y);
/// Flannery bracket: {X,Y} = X_q Y_p - X_p (Y_q - p_j f^j_i) + lam-sector Poisson terms.
double flannery(const PhaseGradient& x, const PhaseGradient& y, const VectorXd& p, const MatrixXd& f);

double poisson(const Observable& x, const Observable& y, const PhaseState& s);
double flannery(const Observable& x, const Observable& y, const PhaseState& s, const TranspositionField& tf);

// ---------------------------------------------------------------------------
// Generic-scalar versions used inside the dynamics.

template <class T>
MatT<T> velocity_jacobian_t(const System& sys, const VecT<T>& x) {
  MatT<T> a(sys.m(), sys.n());
  auto xs = as_span<T>(x);
  for (int k = 0; k < sys.m(); ++k) {
    for (int j = 0; j < sys.n(); ++j) {
      a(k, j) = sys.velocity_dependent(k) ? sys.constraint(k).partial<T>(xs, sys.slot_qd(j)) : T(0.0);
    }
  }
  return a;
}

/// Direction of the total time derivative at x: (q_dot, q_ddot, 1, 0).
template <class T>
VecT<T> time_direction(const System& sys, const VecT<T>& x, const VecT<T>& qdd) {
  VecT<T> v = VecT<T>::Constant(sys.slot_count(), T(0.0));
  for (int i = 0; i < sys.n(); ++i) {
    v(sys.slot_q(i)) = x(sys.slot_qd(i));
    v(sys.slot_qd(i)) = qdd(i);
  }
  v(sys.slot_t()) = T(1.0);
  return v;
}

template <class T>
MatT<T> gkj_t(const System& sys, const VecT<T>& x, const VecT<T>& qdd) {
  MatT<T> g(sys.m(), sys.n());
  VecT<T> v = time_direction<T>(sys, x, qdd);
  VecT<T> u = VecT<T>::Constant(sys.slot_count(), T(0.0));
  auto xs = as_span<T>(x);
  for (int k = 0; k < sys.m(); ++k) {
    const auto& tape = sys.constraint(k);
    for (int j = 0; j < sys.n(); ++j) {
      T dq = tape.partial<T>(xs, sys.slot_q(j));
      if (!sys.velocity_dependent(k)) {
        g(k, j) = -dq;
        continue;
      }
      u(sys.slot_qd(j)) = T(1.0);
      g(k, j) = tape.second_directional<T>(xs, as_span<T>(u), as_span<T>(v)) - dq;
      u(sys.slot_qd(j)) = T(0.0);
    }
  }
  return g;
}

template <class T>
bool all_exactly_zero(const MatT<T>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!exactly_zero(m.data()[i])) return false;
  }
  return true;
}

/// Generic-scalar counterpart of solve_f_compatible.
template <class T>
MatT<T> compatible_f_t(const MatT<T>& a, const MatT<T>& g, const VecT<T>& momentum) {
  const Eigen::Index n = a.cols();
  if (all_exactly_zero<T>(a) || all_exactly_zero<T>(g)) return MatT<T>::Constant(n, n, T(0.0));
  MatT<T> a_pinv = pseudo_inverse_t<T>(a);
  MatT<T> f = a_pinv * g;
  MatT<T> proj = MatT<T>::Identity(n, n) - a_pinv * a;
  VecT<T> w = proj * momentum;
  T ww = w.dot(w);
  double scale = value_of(momentum.dot(momentum));
  if (!(value_of(ww) > 1e-28 * scale) || scale == 0.0) return f;
  VecT<T> c = -(proj * (f.transpose() * momentum));
  f += (w / ww) * c.transpose();
  return f;
}

}  // namespace cdyn
