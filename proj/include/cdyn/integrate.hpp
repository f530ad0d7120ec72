#pragma once

// Time stepping: classical RK4 and Dormand-Prince 5(4) with dense output,
// plus wrappers for the phase-space and configuration-space flows.

#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "cdyn/dynamics.hpp"
#include "cdyn/oracle.hpp"

namespace cdyn {

enum class Scheme { rk4, dp45 };
enum class Stabilization { none, projection };

std::string_view to_string(Scheme s);
std::string_view to_string(Stabilization s);
std::optional<Stabilization> stabilization_from_string(std::string_view s);

struct IntegratorOpts {
  Scheme scheme{Scheme::dp45};
  double dt{1e-3};        // rk4 step
  double rel_tol{1e-10};  // dp45
  double abs_tol{1e-10};  // dp45
  long max_steps{1'000'000};
  double drift_abort{std::numeric_limits<double>::infinity()};  // on max |g_k|
  Stabilization stabilization{Stabilization::none};
};

/// Throws InvalidArgument-style Error when tolerances or limits are not positive.
void validate(const IntegratorOpts& opts);

using OdeRhs = std::function<VectorXd(double t, const VectorXd& y)>;

struct StepHooks {
  /// Drift measure checked after each accepted step against opts.drift_abort.
  std::function<double(double t, const VectorXd& y)> drift;
  /// May modify the accepted state; returns true when it did.
  std::function<bool(double t, VectorXd& y)> post_step;
  /// Called once per accepted step.
  std::function<void(double t)> on_accept;
};

struct OdeSolution {
  std::vector<double> times;       // = requested sample times
  std::vector<VectorXd> states;
  std::vector<double> step_sizes;  // size of the step covering each sample
  std::vector<long> step_index;    // 1-based accepted step covering each sample; 0 for t0
  long accepted{0};
  long rejected{0};
  long rhs_evaluations{0};
};

/// `sample_times` must be sorted within [t0, t_end].
OdeSolution integrate(const OdeRhs& rhs, double t0, const VectorXd& y0, double t_end, const IntegratorOpts& opts,
                      const std::vector<double>& sample_times, const StepHooks& hooks = {});

/// `count` points uniformly spaced over [t0, t_end], both ends included.
std::vector<double> uniform_samples(double t0, double t_end, int count);

// ---------------------------------------------------------------------------

struct SampleDiagnostics {
  VectorXd g;
  VectorXd plam;
  VectorXd lam;
  VectorXd u;
  double energy{0.0};
  double hamiltonian{0.0};
  double f_norm{0.0};
  double step{0.0};
  long newton_iterations{0};  // cumulative multiplier Newton iterations
  int f_iterations{0};
};

struct Trajectory {
  std::vector<double> times;
  std::vector<PhaseState> states;  // lam replaced by the solved multipliers
  std::vector<SampleDiagnostics> diag;
  double max_f_norm{0.0};          // over every rhs evaluation
  long accepted{0};
  long rejected{0};
};

Trajectory integrate_phase(const System& sys, const PhaseState& s0, double t_end, Method method,
                           const IntegratorOpts& opts, const std::vector<double>& sample_times);

struct OracleDiagnostics {
  VectorXd g;
  VectorXd mu;
  double energy{0.0};
  double step{0.0};
};

struct OracleTrajectory {
  std::vector<double> times;
  std::vector<ConfigState> states;
  std::vector<OracleDiagnostics> diag;
  long accepted{0};
  long rejected{0};
};

OracleTrajectory integrate_oracle(const System& sys, const ConfigState& c0, double t_end, const IntegratorOpts& opts,
                                  const std::vector<double>& sample_times);

/// Newton projection back onto the constraint surface. Holonomic constraints
/// are restored by a minimum-norm move of q, the remaining conditions
/// (velocity constraints and the derivative of holonomic ones) by a
/// minimum-norm move of p, after which lam is re-solved. At most four
/// iterations, each required to reduce the residual; NoConvergence otherwise.
PhaseState project(const System& sys, const PhaseState& s, Method method);

/// max_k |g_k| at the state with solved multipliers, together with the
/// time derivative of holonomic constraints.
double constraint_residual(const System& sys, const PhaseState& s, Method method);

}  // namespace cdyn
