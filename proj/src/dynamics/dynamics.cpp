#include "cdyn/dynamics.hpp"

#include <algorithm>

#include "flow.hpp"

namespace cdyn {

std::string_view to_string(Method m) { return m == Method::dirac ? "dirac" : "flannery"; }

std::optional<Method> method_from_string(std::string_view s) {
  if (s == "dirac") return Method::dirac;
  if (s == "flannery") return Method::flannery;
  return std::nullopt;
}

namespace {

constexpr int kMaxNewton = 50;
constexpr double kNewtonTol = 1e-12;
constexpr double kMaxCondition = 1e12;
constexpr int kMaxDepth = 2;

using D1 = Dual<double>;

VectorXd level(int depth, const System& sys, double t, const VectorXd& q, const VectorXd& p,
               const VectorXd& lam, Method method, const VectorXd& guess) {
  switch (depth) {
    case 0: return detail::level_t<0, double>(sys, t, q, p, lam, method, guess);
    case 1: return detail::level_t<1, double>(sys, t, q, p, lam, method, guess);
    case 2: return detail::level_t<2, double>(sys, t, q, p, lam, method, guess);
    case 3: return detail::level_t<3, double>(sys, t, q, p, lam, method, guess);
    default: throw ChainTooDeep("consistency chain deeper than two time derivatives");
  }
}

VecT<D1> level_seeded(int depth, const System& sys, double t, const VectorXd& q, const VectorXd& p,
                      const VecT<D1>& lam, Method method, const VectorXd& guess) {
  D1 td(t);
  VecT<D1> qd = lift<D1>(q);
  VecT<D1> pd = lift<D1>(p);
  switch (depth) {
    case 0: return detail::level_t<0, D1>(sys, td, qd, pd, lam, method, guess);
    case 1: return detail::level_t<1, D1>(sys, td, qd, pd, lam, method, guess);
    case 2: return detail::level_t<2, D1>(sys, td, qd, pd, lam, method, guess);
    default: throw ChainTooDeep("consistency chain deeper than two time derivatives");
  }
}

struct Linearization {
  VectorXd c;  // consistency residual, row k at depth[k]
  MatrixXd j;  // d c / d lam
};

Linearization linearize(const System& sys, double t, const VectorXd& q, const VectorXd& p, const VectorXd& lam,
                        const std::vector<int>& depth, Method method, const VectorXd& guess) {
  const int m = sys.m();
  Linearization out{VectorXd::Zero(m), MatrixXd::Zero(m, m)};
  for (int d = 0; d <= kMaxDepth; ++d) {
    if (std::find(depth.begin(), depth.end(), d) == depth.end()) continue;
    for (int j = 0; j < m; ++j) {
      VecT<D1> seeded = lift<D1>(lam);
      seeded(j).d = 1.0;
      VecT<D1> c = level_seeded(d, sys, t, q, p, seeded, method, guess);
      for (int k = 0; k < m; ++k) {
        if (depth[static_cast<std::size_t>(k)] != d) continue;
        out.c(k) = c(k).v;
        out.j(k, j) = c(k).d;
      }
    }
  }
  return out;
}

bool row_is_zero(const MatrixXd& j, int k) {
  double scale = std::max(1.0, j.lpNorm<Eigen::Infinity>());
  return j.row(k).lpNorm<Eigen::Infinity>() <= 1e-12 * scale;
}

}  // namespace

ConsistencyReport solve_multipliers(const System& sys, double t, const VectorXd& q, const VectorXd& p,
                                    Method method, const VectorXd& warm, const VectorXd& qd_guess) {
  const int m = sys.m();
  ConsistencyReport rep;
  rep.lam = warm.size() == m && warm.allFinite() ? warm : VectorXd::Zero(m);
  rep.u = VectorXd::Zero(m);
  rep.chain_depth.assign(static_cast<std::size_t>(m), 0);
  if (m == 0) return rep;

  VectorXd guess = qd_guess;
  Linearization lin = linearize(sys, t, q, p, rep.lam, rep.chain_depth, method, guess);
  for (;;) {
    bool deepened = false;
    for (int k = 0; k < m; ++k) {
      if (!row_is_zero(lin.j, k)) continue;
      int& d = rep.chain_depth[static_cast<std::size_t>(k)];
      if (++d > kMaxDepth) {
        throw ChainTooDeep("constraint " + std::to_string(k + 1) +
                           " does not determine the multipliers within two time derivatives");
      }
      deepened = true;
    }
    if (!deepened) break;
    lin = linearize(sys, t, q, p, rep.lam, rep.chain_depth, method, guess);
  }

  bool stepped_small = false;
  for (int it = 0;; ++it) {
    rep.condition = condition_number(lin.j);
    if (!(rep.condition <= kMaxCondition)) {
      throw SingularConsistency("multiplier Jacobian is singular (condition estimate " +
                                std::to_string(rep.condition) + ")");
    }
    if (lin.c.lpNorm<Eigen::Infinity>() <= kNewtonTol || stepped_small) {
      rep.iterations = it;
      break;
    }
    if (it == kMaxNewton) throw NoConvergence("multiplier solve did not converge");
    VectorXd step = lin.j.partialPivLu().solve(lin.c);
    rep.lam -= step;
    if (!rep.lam.allFinite()) throw NoConvergence("multiplier solve diverged");
    stepped_small = step.lpNorm<Eigen::Infinity>() <= kNewtonTol * (1.0 + rep.lam.lpNorm<Eigen::Infinity>());
    lin = linearize(sys, t, q, p, rep.lam, rep.chain_depth, method, guess);
  }

  VectorXd next(m);
  for (int d = 0; d <= kMaxDepth; ++d) {
    if (std::find(rep.chain_depth.begin(), rep.chain_depth.end(), d) == rep.chain_depth.end()) continue;
    VectorXd c = level(d + 1, sys, t, q, p, rep.lam, method, guess);
    for (int k = 0; k < m; ++k) {
      if (rep.chain_depth[static_cast<std::size_t>(k)] == d) next(k) = c(k);
    }
  }
  rep.u = -lin.j.partialPivLu().solve(next);
  return rep;
}

RhsEvaluation evaluate_rhs(const System& sys, const PhaseState& s, Method method, const VectorXd& qd_guess) {
  RhsEvaluation ev;
  ev.consistency = solve_multipliers(sys, s.t, s.q, s.p, method, s.lam, qd_guess);
  auto fl = detail::flow_t<double>(sys, s.t, s.q, s.p, ev.consistency.lam, method, qd_guess,
                                   &ev.legendre_iterations);
  ev.qd = fl.qd;
  ev.f = fl.f;
  ev.f_iterations = fl.f_iterations;
  ev.rate.q = fl.qd;
  ev.rate.p = fl.pd;
  ev.rate.lam = ev.consistency.u;
  ev.rate.plam = -constraint_values(sys, ConfigState{s.t, s.q, fl.qd});
  return ev;
}

PhaseRate rhs(const System& sys, const PhaseState& s, Method method) { return evaluate_rhs(sys, s, method).rate; }

SelfConsistentF self_consistent_f(const System& sys, const ConfigState& cs, const VectorXd& p,
                                  const VectorXd& lam, Method method) {
  SelfConsistentF out;
  VectorXd x = sys.slots(cs, lam);
  out.field.A = velocity_jacobian_t<double>(sys, x);
  out.qdd = VectorXd::Zero(sys.n());
  if (method == Method::flannery) {
    auto tr = detail::transposition_t<double>(sys, x, p, lam, detail::adjoined_dq<double>(sys, x));
    out.field.f = tr.f;
    out.qdd = tr.qdd;
    out.iterations = tr.iterations;
  } else {
    out.field.f = MatrixXd::Zero(sys.n(), sys.n());
  }
  out.field.G = gkj_t<double>(sys, x, out.qdd);
  if (sys.m() > 0) out.field.residual = (out.field.A * out.field.f - out.field.G).lpNorm<Eigen::Infinity>();
  return out;
}

RateContext rate_context(const System& sys, const PhaseState& s, Method method) {
  RhsEvaluation ev = evaluate_rhs(sys, s, method);
  RateContext ctx;
  ctx.method = method;
  ctx.state = s;
  ctx.state.lam = ev.consistency.lam;
  HamiltonianGradient hg = grad_hamiltonian(sys, ctx.state, ev.qd);
  ctx.hamiltonian.dq = hg.dq;
  ctx.hamiltonian.dp = hg.dp;
  ctx.hamiltonian.dlam = hg.dlam;
  ctx.hamiltonian.dplam = ev.consistency.u;
  ctx.hamiltonian.dt = hg.dt;
  ctx.f = ev.f;
  return ctx;
}

double rate(const PhaseGradient& x, const RateContext& ctx) {
  double b = ctx.method == Method::flannery ? flannery(x, ctx.hamiltonian, ctx.state.p, ctx.f)
                                            : poisson(x, ctx.hamiltonian);
  return b + x.dt;
}

double observable_rate(const Observable& x, const System& sys, const PhaseState& s, Method method) {
  RateContext ctx = rate_context(sys, s, method);
  return rate(x.gradient(ctx.state), ctx);
}

PhaseGradient constraint_gradient(const System& sys, const PhaseState& s, int k, const VectorXd& qd_guess) {
  const int n = sys.n();
  const int m = sys.m();
  VecT<D1> q = lift<D1>(s.q);
  VecT<D1> p = lift<D1>(s.p);
  VecT<D1> lam = lift<D1>(s.lam);
  D1 t(s.t);
  auto partial = [&]() {
    VecT<D1> qd = velocities_t<D1>(sys, t, q, p, lam, qd_guess);
    VecT<D1> x = sys.slots<D1>(t, q, qd, lam);
    return sys.constraint(k).eval<D1>(as_span<D1>(x)).d;
  };
  PhaseGradient g;
  g.dq.resize(n);
  g.dp.resize(n);
  g.dlam.resize(m);
  g.dplam = VectorXd::Zero(m);
  for (int i = 0; i < n; ++i) {
    q(i).d = 1.0;
    g.dq(i) = partial();
    q(i).d = 0.0;
    p(i).d = 1.0;
    g.dp(i) = partial();
    p(i).d = 0.0;
  }
  for (int j = 0; j < m; ++j) {
    lam(j).d = 1.0;
    g.dlam(j) = partial();
    lam(j).d = 0.0;
  }
  t.d = 1.0;
  g.dt = partial();
  return g;
}

RhsEvaluation PhaseFlow::evaluate(const PhaseState& s) {
  RhsEvaluation ev = evaluate_rhs(*sys_, s, method_, qd_guess_);
  qd_guess_ = ev.qd;
  newton_iterations_ += ev.consistency.iterations;
  return ev;
}

ConsistencyReport PhaseFlow::solve(const PhaseState& s) {
  ConsistencyReport rep = solve_multipliers(*sys_, s.t, s.q, s.p, method_, s.lam, qd_guess_);
  newton_iterations_ += rep.iterations;
  return rep;
}

}  // namespace cdyn
