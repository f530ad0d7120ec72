#include <algorithm>
#include <cmath>

#include "cdyn/integrate.hpp"

namespace cdyn {

namespace {

using D1 = Dual<double>;

VectorXd pack(const PhaseState& s) {
  VectorXd y(s.q.size() + s.p.size() + s.lam.size() + s.plam.size());
  y << s.q, s.p, s.lam, s.plam;
  return y;
}

PhaseState unpack(const System& sys, double t, const VectorXd& y) {
  const int n = sys.n();
  const int m = sys.m();
  return {t, y.segment(0, n), y.segment(n, n), y.segment(2 * n, m), y.segment(2 * n + m, m)};
}

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// Conditions restored by projection: every g_k, plus dg_k/dt for holonomic g_k.
struct SurfaceResidual {
  VectorXd g;      // all constraints
  VectorXd gdot;   // holonomic rows only (in order)
  std::vector<int> holonomic;
  VectorXd lam;
  VectorXd qd;
  double norm() const { return std::max(inf_norm(g), inf_norm(gdot)); }
};

SurfaceResidual surface_residual(const System& sys, const PhaseState& s, Method method, const VectorXd& guess) {
  SurfaceResidual r;
  ConsistencyReport rep = solve_multipliers(sys, s.t, s.q, s.p, method, s.lam, guess);
  r.lam = rep.lam;
  r.qd = legendre_invert(sys, s.t, s.q, s.p, r.lam, guess);
  VectorXd x = sys.slots<double>(s.t, s.q, r.qd, r.lam);
  auto xs = as_span<double>(x);
  VectorXd v = VectorXd::Zero(sys.slot_count());
  for (int i = 0; i < sys.n(); ++i) v(sys.slot_q(i)) = r.qd(i);
  v(sys.slot_t()) = 1.0;
  r.g.resize(sys.m());
  std::vector<double> gd;
  for (int k = 0; k < sys.m(); ++k) {
    r.g(k) = sys.constraint(k).eval<double>(xs);
    if (!sys.velocity_dependent(k)) {
      r.holonomic.push_back(k);
      gd.push_back(sys.constraint(k).directional<double>(xs, as_span<double>(v)));
    }
  }
  r.gdot = Eigen::Map<VectorXd>(gd.data(), static_cast<Eigen::Index>(gd.size()));
  return r;
}

/// Minimum-norm Newton move of q for the holonomic constraints.
VectorXd q_step(const System& sys, const PhaseState& s, const SurfaceResidual& r) {
  const int h = static_cast<int>(r.holonomic.size());
  if (h == 0) return VectorXd::Zero(sys.n());
  VectorXd x = sys.slots<double>(s.t, s.q, r.qd, r.lam);
  auto xs = as_span<double>(x);
  MatrixXd j(h, sys.n());
  VectorXd g(h);
  for (int a = 0; a < h; ++a) {
    int k = r.holonomic[static_cast<std::size_t>(a)];
    g(a) = r.g(k);
    for (int i = 0; i < sys.n(); ++i) j(a, i) = sys.constraint(k).partial<double>(xs, sys.slot_q(i));
  }
  return -pseudo_inverse(j) * g;
}

/// Velocity-level rows as functions of p at fixed (q, lam).
VecT<D1> velocity_rows(const System& sys, const PhaseState& s, const VecT<D1>& p, const VectorXd& lam,
                       const VectorXd& guess) {
  D1 t(s.t);
  VecT<D1> q = lift<D1>(s.q);
  VecT<D1> l = lift<D1>(lam);
  VecT<D1> qd = velocities_t<D1>(sys, t, q, p, l, guess);
  VecT<D1> x = sys.slots<D1>(t, q, qd, l);
  auto xs = as_span<D1>(x);
  VecT<D1> v = VecT<D1>::Constant(sys.slot_count(), D1(0.0));
  for (int i = 0; i < sys.n(); ++i) v(sys.slot_q(i)) = qd(i);
  v(sys.slot_t()) = D1(1.0);
  VecT<D1> out(sys.m());
  for (int k = 0; k < sys.m(); ++k) {
    out(k) = sys.velocity_dependent(k) ? sys.constraint(k).eval<D1>(xs)
                                       : sys.constraint(k).directional<D1>(xs, as_span<D1>(v));
  }
  return out;
}

VectorXd p_step(const System& sys, const PhaseState& s, const VectorXd& lam, const VectorXd& guess) {
  const int n = sys.n();
  const int m = sys.m();
  MatrixXd j(m, n);
  VectorXd r(m);
  for (int i = 0; i < n; ++i) {
    VecT<D1> p = lift<D1>(s.p);
    p(i).d = 1.0;
    VecT<D1> rows = velocity_rows(sys, s, p, lam, guess);
    for (int k = 0; k < m; ++k) {
      j(k, i) = rows(k).d;
      r(k) = rows(k).v;
    }
  }
  return -pseudo_inverse(j) * r;
}

}  // namespace

double constraint_residual(const System& sys, const PhaseState& s, Method method) {
  if (sys.m() == 0) return 0.0;
  return surface_residual(sys, s, method, {}).norm();
}

PhaseState project(const System& sys, const PhaseState& s, Method method) {
  constexpr int kMaxIterations = 4;
  constexpr double kTolerance = 1e-12;
  if (sys.m() == 0) return s;
  SurfaceResidual r = surface_residual(sys, s, method, {});
  double prev = r.norm();
  if (prev <= kTolerance) return s;
  PhaseState cur = s;
  for (int it = 0; it < kMaxIterations; ++it) {
    cur.q += q_step(sys, cur, r);
    if (!r.holonomic.empty()) r = surface_residual(sys, cur, method, r.qd);
    cur.lam = r.lam;
    cur.p += p_step(sys, cur, r.lam, r.qd);
    r = surface_residual(sys, cur, method, r.qd);
    cur.lam = r.lam;
    double now = r.norm();
    if (!(now < prev)) throw NoConvergence("projection did not reduce the constraint residual");
    if (now <= kTolerance) return cur;
    prev = now;
  }
  throw NoConvergence("projection did not reach the constraint surface in four iterations");
}

Trajectory integrate_phase(const System& sys, const PhaseState& s0, double t_end, Method method,
                           const IntegratorOpts& opts, const std::vector<double>& sample_times) {
  PhaseFlow flow(sys, method);
  Trajectory traj;
  struct Last {
    double t;
    VectorXd y;
    double drift;
  };
  std::optional<Last> last;

  OdeRhs rhs = [&](double t, const VectorXd& y) {
    RhsEvaluation ev = flow.evaluate(unpack(sys, t, y));
    traj.max_f_norm = std::max(traj.max_f_norm, ev.f.size() ? ev.f.lpNorm<Eigen::Infinity>() : 0.0);
    last = Last{t, y, inf_norm(ev.rate.plam)};
    VectorXd dy(y.size());
    dy << ev.rate.q, ev.rate.p, ev.rate.lam, ev.rate.plam;
    return dy;
  };
  StepHooks hooks;
  hooks.drift = [&](double t, const VectorXd& y) {
    if (last && last->t == t && last->y == y) return last->drift;
    RhsEvaluation ev = evaluate_rhs(sys, unpack(sys, t, y), method, flow.velocity_guess());
    return inf_norm(ev.rate.plam);
  };
  if (opts.stabilization == Stabilization::projection) {
    hooks.post_step = [&](double t, VectorXd& y) {
      PhaseState s = unpack(sys, t, y);
      PhaseState pr = project(sys, s, method);
      if (pr.q == s.q && pr.p == s.p) return false;
      y = pack(pr);
      return true;
    };
  }

  std::vector<long> newton_after_step;
  hooks.on_accept = [&](double) { newton_after_step.push_back(flow.newton_iterations()); };

  OdeSolution sol = integrate(rhs, s0.t, pack(s0), t_end, opts, sample_times, hooks);
  traj.accepted = sol.accepted;
  traj.rejected = sol.rejected;
  VectorXd guess;
  for (std::size_t i = 0; i < sol.times.size(); ++i) {
    PhaseState s = unpack(sys, sol.times[i], sol.states[i]);
    RhsEvaluation ev = evaluate_rhs(sys, s, method, guess);
    guess = ev.qd;
    s.lam = ev.consistency.lam;
    SampleDiagnostics d;
    d.g = -ev.rate.plam;
    d.plam = s.plam;
    d.lam = s.lam;
    d.u = ev.consistency.u;
    d.energy = physical_energy(sys, ConfigState{s.t, s.q, ev.qd});
    d.hamiltonian = hamiltonian(sys, s, ev.qd);
    d.f_norm = ev.f.size() ? ev.f.lpNorm<Eigen::Infinity>() : 0.0;
    d.step = sol.step_sizes[i];
    long step = sol.step_index[i];
    d.newton_iterations = step == 0 || newton_after_step.empty()
                              ? 0
                              : newton_after_step[static_cast<std::size_t>(step - 1)];
    d.f_iterations = ev.f_iterations;
    traj.max_f_norm = std::max(traj.max_f_norm, d.f_norm);
    traj.times.push_back(s.t);
    traj.states.push_back(std::move(s));
    traj.diag.push_back(std::move(d));
  }
  return traj;
}

OracleTrajectory integrate_oracle(const System& sys, const ConfigState& c0, double t_end, const IntegratorOpts& opts,
                                  const std::vector<double>& sample_times) {
  const int n = sys.n();
  OdeRhs rhs = [&](double t, const VectorXd& y) {
    OracleRhs o = lda_rhs(sys, ConfigState{t, y.head(n), y.tail(n)});
    VectorXd dy(2 * n);
    dy << y.tail(n), o.qdd;
    return dy;
  };
  StepHooks hooks;
  hooks.drift = [&](double t, const VectorXd& y) {
    return inf_norm(constraint_values(sys, ConfigState{t, y.head(n), y.tail(n)}));
  };
  VectorXd y0(2 * n);
  y0 << c0.q, c0.qd;
  OdeSolution sol = integrate(rhs, c0.t, y0, t_end, opts, sample_times, hooks);
  OracleTrajectory traj;
  traj.accepted = sol.accepted;
  traj.rejected = sol.rejected;
  for (std::size_t i = 0; i < sol.times.size(); ++i) {
    ConfigState cs{sol.times[i], sol.states[i].head(n), sol.states[i].tail(n)};
    OracleDiagnostics d;
    d.g = constraint_values(sys, cs);
    d.mu = lda_rhs(sys, cs).mu;
    d.energy = physical_energy(sys, cs);
    d.step = sol.step_sizes[i];
    traj.times.push_back(cs.t);
    traj.states.push_back(std::move(cs));
    traj.diag.push_back(std::move(d));
  }
  return traj;
}

}  // namespace cdyn
