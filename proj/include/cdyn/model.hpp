#pragma once

// System definition, adjoined Lagrangian L~ = L - lam^k g_k, and its Legendre
// transform to the adjoined Hamiltonian H~(q, p, lam, t).

#include <map>
#include <string>
#include <vector>

#include "cdyn/expr.hpp"
#include "cdyn/linalg.hpp"

namespace cdyn {

/// Declarative problem: coordinates, SI parameters, L(q, q_dot, t) and g_k(q, q_dot, t).
struct SystemSpec {
  std::string name;
  std::vector<std::string> coords;
  std::map<std::string, double> params;
  expr::Expr lagrangian;
  std::vector<expr::Expr> constraints;
};

struct ConfigState {
  double t{0.0};
  VectorXd q;
  VectorXd qd;
};

/// Point of extended phase space (t, q, p, lam, p_lam).
struct PhaseState {
  double t{0.0};
  VectorXd q;
  VectorXd p;
  VectorXd lam;
  VectorXd plam;
};

// Naming convention shared by every expression in the engine.
std::string velocity_name(const std::string& coord);   // x -> x_dot
std::string momentum_name(const std::string& coord);   // x -> p_x
std::string multiplier_name(int k);                    // 0 -> lam_1
std::string multiplier_momentum_name(int k);           // 0 -> plam_1

/// Validated, compiled SystemSpec. Immutable and shareable across threads.
///
/// Tape slot layout: [q_0..q_{n-1}, qd_0..qd_{n-1}, t, lam_1..lam_m].
class System {
 public:
  explicit System(SystemSpec spec);

  const SystemSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }
  int n() const { return n_; }
  int m() const { return m_; }

  int slot_q(int i) const { return i; }
  int slot_qd(int i) const { return n_ + i; }
  int slot_t() const { return 2 * n_; }
  int slot_lam(int k) const { return 2 * n_ + 1 + k; }
  int slot_count() const { return 2 * n_ + 1 + m_; }

  const expr::Tape& lagrangian() const { return lagrangian_; }
  const expr::Tape& adjoined() const { return adjoined_; }
  const expr::Tape& constraint(int k) const { return constraints_[static_cast<std::size_t>(k)]; }

  /// True when g_k references any velocity.
  bool velocity_dependent(int k) const { return velocity_dependent_[static_cast<std::size_t>(k)]; }
  /// True when every g_k is at most linear in the velocities (G then has no q_ddot term).
  bool linear_in_velocity() const { return linear_in_velocity_; }

  /// Slot vector for the tapes.
  template <class T>
  VecT<T> slots(const T& t, const VecT<T>& q, const VecT<T>& qd, const VecT<T>& lam) const {
    VecT<T> x(slot_count());
    for (int i = 0; i < n_; ++i) {
      x(slot_q(i)) = q(i);
      x(slot_qd(i)) = qd(i);
    }
    x(slot_t()) = t;
    for (int k = 0; k < m_; ++k) x(slot_lam(k)) = lam(k);
    return x;
  }
  VectorXd slots(const ConfigState& cs, const VectorXd& lam) const {
    return slots<double>(cs.t, cs.q, cs.qd, lam);
  }

 private:
  SystemSpec spec_;
  int n_{0};
  int m_{0};
  expr::Tape lagrangian_;
  expr::Tape adjoined_;
  std::vector<expr::Tape> constraints_;
  std::vector<bool> velocity_dependent_;
  bool linear_in_velocity_{true};
};

template <class T>
std::span<const T> as_span(const VecT<T>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// L - lam^k g_k at (q, q_dot, t).
double adjoined_lagrangian(const System& sys, const ConfigState& cs, const VectorXd& lam);

/// p_i = dL~/dq_dot^i.
VectorXd momenta(const System& sys, const ConfigState& cs, const VectorXd& lam);

/// Result of the Newton solve momenta(q_dot) = p.
struct LegendreSolution {
  VectorXd qd;
  MatrixXd hessian;  // d^2 L~ / dq_dot dq_dot at the solution
  int iterations{0};
};

/// Inverts the Legendre map by Newton iteration from `guess`.
/// Throws DegenerateLegendre (velocity Hessian condition > 1e12) or NoConvergence (50 iterations).
LegendreSolution legendre_solve(const System& sys, double t, const VectorXd& q, const VectorXd& p,
                                const VectorXd& lam, const VectorXd& guess);

VectorXd legendre_invert(const System& sys, double t, const VectorXd& q, const VectorXd& p,
                         const VectorXd& lam, const VectorXd& guess);

/// H~ = q_dot p - L~ with q_dot = q_dot(q, p, lam, t). `guess` warm-starts the
/// Legendre solve (zero vector when empty).
double hamiltonian(const System& sys, const PhaseState& s, const VectorXd& guess = {});

/// Partials of H~ at fixed remaining variables (envelope form):
/// dH/dq = -dL~/dq, dH/dp = q_dot, dH/dlam_k = g_k, dH/dt = -dL~/dt.
struct HamiltonianGradient {
  VectorXd dq;
  VectorXd dp;
  VectorXd dlam;
  double dt{0.0};
};
HamiltonianGradient grad_hamiltonian(const System& sys, const PhaseState& s, const VectorXd& guess = {});

/// Physical energy q_dot . dL/dq_dot - L of the unadjoined Lagrangian.
double physical_energy(const System& sys, const ConfigState& cs);

/// g_k(q, q_dot, t) for all k.
VectorXd constraint_values(const System& sys, const ConfigState& cs);

// ---------------------------------------------------------------------------
// Generic-scalar building blocks used by the dynamics module.

/// dL~/dq_dot on generic scalars.
template <class T>
VecT<T> momenta_t(const System& sys, const VecT<T>& x) {
  VecT<T> p(sys.n());
  auto xs = as_span<T>(x);
  for (int i = 0; i < sys.n(); ++i) p(i) = sys.adjoined().partial<T>(xs, sys.slot_qd(i));
  return p;
}

/// q_dot(q, p, lam, t) on generic scalars. The value part comes from the
/// Newton solve in double; derivative parts are then propagated exactly by
/// chord iterations with the converged value Hessian (the iteration error
/// is nilpotent in the derivative parts, so depth+1 sweeps are exact).
template <class T>
VecT<T> velocities_t(const System& sys, const T& t, const VecT<T>& q, const VecT<T>& p,
                     const VecT<T>& lam, const VectorXd& guess, int* iterations = nullptr) {
  LegendreSolution sol = legendre_solve(sys, value_of(t), values_of<T>(q), values_of<T>(p),
                                        values_of<T>(lam), guess);
  if (iterations) *iterations += sol.iterations;
  VecT<T> qd = lift<T>(sol.qd);
  if constexpr (dual_depth<T>::value > 0) {
    Eigen::PartialPivLU<MatrixXd> lu(sol.hessian);
    MatrixXd winv = lu.inverse();
    MatT<T> winv_t = winv.cast<T>();
    for (int sweep = 0; sweep <= dual_depth<T>::value; ++sweep) {
      VecT<T> x = sys.slots<T>(t, q, qd, lam);
      VecT<T> residual = momenta_t<T>(sys, x) - p;
      qd -= winv_t * residual;
    }
  }
  return qd;
}

}  // namespace cdyn
