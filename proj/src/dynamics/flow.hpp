#pragma once

// Generic-scalar flow used by the consistency solve. Every function here is
// instantiated on double and on nested Dual numbers; nesting one level per
// time derivative gives exact higher derivatives along the flow.

#include "cdyn/brackets.hpp"
#include "cdyn/dynamics.hpp"

namespace cdyn::detail {

constexpr int kMaxFixedPoint = 50;
constexpr double kFixedPointTol = 1e-12;

template <class T>
VecT<T> adjoined_dq(const System& sys, const VecT<T>& x) {
  VecT<T> out(sys.n());
  auto xs = as_span<T>(x);
  for (int i = 0; i < sys.n(); ++i) out(i) = sys.adjoined().partial<T>(xs, sys.slot_q(i));
  return out;
}

/// Accelerations implied by the momentum rate `pd` and the differentiated
/// velocity constraints:
///   [W~  -A^T] [q_ddot ]   [pd - D_v(dL~/dq_dot)       ]
///   [A    0  ] [lam_dot] = [-(dg/dq q_dot + dg/dt)      ]
template <class T>
VecT<T> accelerations_t(const System& sys, const VecT<T>& x, const VecT<T>& pd) {
  const int n = sys.n();
  std::vector<int> rows;
  for (int k = 0; k < sys.m(); ++k) {
    if (sys.velocity_dependent(k)) rows.push_back(k);
  }
  const int r = static_cast<int>(rows.size());
  auto xs = as_span<T>(x);
  VecT<T> zero = VecT<T>::Constant(n, T(0.0));
  VecT<T> v = time_direction<T>(sys, x, zero);
  auto vs = as_span<T>(v);
  VecT<T> e = VecT<T>::Constant(sys.slot_count(), T(0.0));

  MatT<T> k_mat = MatT<T>::Constant(n + r, n + r, T(0.0));
  VecT<T> b(n + r);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      k_mat(i, j) = k_mat(j, i) = sys.adjoined().second_partial<T>(xs, sys.slot_qd(i), sys.slot_qd(j));
    }
    e(sys.slot_qd(i)) = T(1.0);
    b(i) = pd(i) - sys.adjoined().second_directional<T>(xs, as_span<T>(e), vs);
    e(sys.slot_qd(i)) = T(0.0);
  }
  for (int a = 0; a < r; ++a) {
    const auto& g = sys.constraint(rows[static_cast<std::size_t>(a)]);
    for (int j = 0; j < n; ++j) {
      T akj = g.partial<T>(xs, sys.slot_qd(j));
      k_mat(n + a, j) = akj;
      k_mat(j, n + a) = -akj;
    }
    b(n + a) = -g.directional<T>(xs, vs);
  }
  VecT<T> sol = lu_solve<T>(k_mat, b);
  return sol.head(n);
}

template <class T>
struct TranspositionT {
  MatT<T> f;
  VecT<T> qdd;
  int iterations{0};
};

/// Momentum-compatible f at x, iterated to self-consistency in q_ddot when
/// some constraint is nonlinear in the velocities.
template <class T>
TranspositionT<T> transposition_t(const System& sys, const VecT<T>& x, const VecT<T>& p, const VecT<T>& lam,
                                  const VecT<T>& pd_base) {
  const int n = sys.n();
  TranspositionT<T> out;
  out.f = MatT<T>::Constant(n, n, T(0.0));
  out.qdd = VecT<T>::Constant(n, T(0.0));
  if (sys.m() == 0) return out;
  MatT<T> a = velocity_jacobian_t<T>(sys, x);
  if (all_exactly_zero<T>(a)) return out;
  VecT<T> momentum = p + a.transpose() * lam;
  if (!sys.linear_in_velocity()) out.qdd = accelerations_t<T>(sys, x, pd_base);
  out.f = compatible_f_t<T>(a, gkj_t<T>(sys, x, out.qdd), momentum);
  out.iterations = 1;
  if (sys.linear_in_velocity()) return out;
  for (;;) {
    VecT<T> qdd = accelerations_t<T>(sys, x, VecT<T>(pd_base + out.f.transpose() * p));
    MatT<T> next = compatible_f_t<T>(a, gkj_t<T>(sys, x, qdd), momentum);
    double change = (values_of<T>(next) - values_of<T>(out.f)).template lpNorm<Eigen::Infinity>();
    out.f = next;
    out.qdd = qdd;
    ++out.iterations;
    if (change < kFixedPointTol) return out;
    if (out.iterations >= kMaxFixedPoint) throw NoConvergence("transposition fixed point did not converge");
  }
}

template <class T>
struct FlowT {
  VecT<T> qd;
  VecT<T> pd;
  MatT<T> f;
  int f_iterations{0};
};

/// (q_dot, p_dot) at fixed lam for the given method.
template <class T>
FlowT<T> flow_t(const System& sys, const T& t, const VecT<T>& q, const VecT<T>& p, const VecT<T>& lam,
                Method method, const VectorXd& guess, int* legendre_iterations = nullptr) {
  FlowT<T> out;
  out.qd = velocities_t<T>(sys, t, q, p, lam, guess, legendre_iterations);
  VecT<T> x = sys.slots<T>(t, q, out.qd, lam);
  out.pd = adjoined_dq<T>(sys, x);
  if (method == Method::flannery) {
    TranspositionT<T> tr = transposition_t<T>(sys, x, p, lam, out.pd);
    out.f = tr.f;
    out.f_iterations = tr.iterations;
    if (tr.iterations > 0) out.pd += out.f.transpose() * p;
  } else {
    out.f = MatT<T>::Constant(sys.n(), sys.n(), T(0.0));
  }
  return out;
}

/// c_D: the D-th time derivative of g along the flow with lam held fixed.
template <int D, class T>
VecT<T> level_t(const System& sys, const T& t, const VecT<T>& q, const VecT<T>& p, const VecT<T>& lam,
                Method method, const VectorXd& guess) {
  if constexpr (D == 0) {
    VecT<T> qd = velocities_t<T>(sys, t, q, p, lam, guess);
    VecT<T> x = sys.slots<T>(t, q, qd, lam);
    auto xs = as_span<T>(x);
    VecT<T> g(sys.m());
    for (int k = 0; k < sys.m(); ++k) g(k) = sys.constraint(k).eval<T>(xs);
    return g;
  } else {
    using U = Dual<T>;
    FlowT<T> fl = flow_t<T>(sys, t, q, p, lam, method, guess);
    VecT<U> qu(sys.n()), pu(sys.n()), lu(sys.m());
    for (int i = 0; i < sys.n(); ++i) {
      qu(i) = U(q(i), fl.qd(i));
      pu(i) = U(p(i), fl.pd(i));
    }
    for (int k = 0; k < sys.m(); ++k) lu(k) = U(lam(k), T(0.0));
    VecT<U> c = level_t<D - 1, U>(sys, U(t, T(1.0)), qu, pu, lu, method, guess);
    VecT<T> out(sys.m());
    for (int k = 0; k < sys.m(); ++k) out(k) = c(k).d;
    return out;
  }
}

}  // namespace cdyn::detail
