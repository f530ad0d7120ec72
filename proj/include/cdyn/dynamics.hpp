#pragma once

// Phase-space equations of motion for Dirac's method and its Flannery
// extension, including the multiplier-consistency solve.
//
//   q_dot   =  dH~/dp
//   p_dot   = -dH~/dq  (+ p_j f^j_i for the Flannery method)
//   lam_dot =  u        (implied by the consistency conditions)
//   plam_dot = -dH~/dlam = -g

#include <optional>
#include <string_view>
#include <vector>

#include "cdyn/brackets.hpp"
#include "cdyn/model.hpp"

namespace cdyn {

enum class Method { dirac, flannery };

std::string_view to_string(Method m);
std::optional<Method> method_from_string(std::string_view s);

struct ConsistencyReport {
  VectorXd lam;                  // solved multipliers
  VectorXd u;                    // implied lam_dot
  std::vector<int> chain_depth;  // per constraint: 0, 1 or 2 time derivatives
  double condition{1.0};         // of the d(consistency)/d(lam) Jacobian
  int iterations{0};             // Newton iterations on lam
};

/// Finds lam such that every g_k (or its first/second derivative along the
/// method's flow, whichever first depends on lam) vanishes at (t, q, p).
/// Newton to 1e-12, at most 50 iterations, warm-started from `warm`.
/// Throws ChainTooDeep, SingularConsistency or NoConvergence.
ConsistencyReport solve_multipliers(const System& sys, double t, const VectorXd& q, const VectorXd& p,
                                    Method method, const VectorXd& warm, const VectorXd& qd_guess = {});

/// Time derivative of a PhaseState.
struct PhaseRate {
  VectorXd q;
  VectorXd p;
  VectorXd lam;
  VectorXd plam;
};

struct RhsEvaluation {
  PhaseRate rate;
  ConsistencyReport consistency;
  VectorXd qd;   // = rate.q
  MatrixXd f;    // transposition tensor used (zero for Dirac)
  int f_iterations{0};
  int legendre_iterations{0};
};

/// Full right-hand side with diagnostics. `s.lam` only warm-starts the
/// multiplier solve; the returned rates are evaluated at the solved lam.
RhsEvaluation evaluate_rhs(const System& sys, const PhaseState& s, Method method,
                           const VectorXd& qd_guess = {});

PhaseRate rhs(const System& sys, const PhaseState& s, Method method);

struct SelfConsistentF {
  TranspositionField field;
  VectorXd qdd;
  int iterations{0};
};

/// Resolves the q_ddot dependence of G by fixed-point iteration
/// f <- f(A, G(q_ddot(f))) (one pass for constraints linear in velocity).
/// Uses the momentum-compatible representative of f. Dirac returns f = 0.
SelfConsistentF self_consistent_f(const System& sys, const ConfigState& cs, const VectorXd& p,
                                  const VectorXd& lam, Method method);

/// Everything needed to evaluate dX/dt = {X, H~} at a state.
struct RateContext {
  Method method{Method::flannery};
  PhaseState state;          // with solved lam
  PhaseGradient hamiltonian; // includes dH/dp_lam = u
  MatrixXd f;
};

RateContext rate_context(const System& sys, const PhaseState& s, Method method);

/// {X, H~} with the method's bracket, plus the explicit dX/dt.
double rate(const PhaseGradient& x, const RateContext& ctx);

double observable_rate(const Observable& x, const System& sys, const PhaseState& s, Method method);

/// Gradient of g_k(q, q_dot(q, p, lam, t), t) on phase space.
PhaseGradient constraint_gradient(const System& sys, const PhaseState& s, int k,
                                  const VectorXd& qd_guess = {});

/// Warm-start cache for one trajectory: remembers the previous velocities and
/// multipliers. Not shared between threads.
class PhaseFlow {
 public:
  PhaseFlow(const System& sys, Method method) : sys_(&sys), method_(method) {}

  RhsEvaluation evaluate(const PhaseState& s);
  ConsistencyReport solve(const PhaseState& s);

  const System& system() const { return *sys_; }
  Method method() const { return method_; }
  int newton_iterations() const { return newton_iterations_; }
  void reset_counters() { newton_iterations_ = 0; }
  const VectorXd& velocity_guess() const { return qd_guess_; }

 private:
  const System* sys_;
  Method method_;
  VectorXd qd_guess_;
  int newton_iterations_{0};
};

}  // namespace cdyn
