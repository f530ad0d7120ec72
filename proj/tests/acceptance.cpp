// Acceptance criteria A1-A10. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdyn/check.hpp"
#include "cdyn/integrate.hpp"
#include "support.hpp"

using namespace cdyn;
using testing::load;
using testing::Loaded;

namespace {

struct Verdict {
  bool pass{false};
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

IntegratorOpts dp45(double tol) {
  IntegratorOpts o;
  o.rel_tol = o.abs_tol = tol;
  return o;
}

double max_abs(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Fig. 1 runs shared by A1-A4.
struct SphereRuns {
  Loaded sc = load("rolling-sphere");
  std::vector<double> ts = uniform_samples(0.0, 2.0, 2001);
  Trajectory flannery, dirac;
  OracleTrajectory oracle;

  SphereRuns() {
    PhaseState s0 = initial_phase_state(sc.sys, sc.cfg);
    flannery = integrate_phase(sc.sys, s0, 2.0, Method::flannery, dp45(1e-10), ts);
    dirac = integrate_phase(sc.sys, s0, 2.0, Method::dirac, dp45(1e-10), ts);
    oracle = integrate_oracle(sc.sys, initial_config(sc.cfg), 2.0, dp45(1e-10), ts);
  }

  std::vector<double> omega_z(const Trajectory& tr) const {
    std::vector<double> w;
    for (const auto& s : tr.states) {
      VectorXd qd = legendre_invert(sc.sys, s.t, s.q, s.p, s.lam, {});
      w.push_back(qd(3) + qd(4) * std::cos(s.q(2)));
    }
    return w;
  }

  double deviation(const Trajectory& tr) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) worst = std::max(worst, max_abs(tr.states[i].q - oracle.states[i].q));
    return worst;
  }
};

double simpson(const std::vector<double>& y, double h) {
  double s = y.front() + y.back();
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += (i % 2 ? 4.0 : 2.0) * y[i];
  return s * h / 3.0;
}

Verdict a1(const SphereRuns& r) {
  double x1 = r.flannery.states[1000].q(0);
  double x2 = r.flannery.states.back().q(0);
  bool ok = std::abs(x2 - 7.0) < 1e-3 && std::abs(x1 - 1.75) < 1e-3;
  return {ok, fmt("x(1) = %.12f, x(2) = %.12f", x1, x2)};
}

Verdict a2(const SphereRuns& r) {
  double worst = 0.0;
  for (double w : r.omega_z(r.flannery)) worst = std::max(worst, std::abs(w - 2.5));
  return {worst < 1e-6, fmt("max |omega_z - 2.5| = %.3e", worst)};
}

Verdict a3(const SphereRuns& r) {
  double dev = r.deviation(r.flannery);
  return {dev < 1e-5, fmt("max |q_flannery - q_oracle| = %.3e", dev)};
}

Verdict a4(const SphereRuns& r) {
  double dev_f = r.deviation(r.flannery);
  double dev_d = r.deviation(r.dirac);
  double phi = simpson(r.omega_z(r.dirac), r.ts[1] - r.ts[0]);
  bool ok = dev_d > 100 * dev_f && std::abs(phi - 5.0) > 100 * 1e-5;
  return {ok, fmt("dirac deviation %.3e vs flannery %.3e; dirac integral of omega_z over [0,2] = %.6f", dev_d, dev_f,
                  phi)};
}

Verdict a5() {
  Loaded sc = load("rod-pendulum");
  PhaseState s0 = initial_phase_state(sc.sys, sc.cfg);
  std::vector<double> ts = uniform_samples(0.0, 10.0, 1001);
  IntegratorOpts o = dp45(1e-12);
  Trajectory f = integrate_phase(sc.sys, s0, 10.0, Method::flannery, o, ts);
  Trajectory d = integrate_phase(sc.sys, s0, 10.0, Method::dirac, o, ts);
  double agree = 0.0, residual = 0.0, drift = 0.0;
  const double e0 = f.diag.front().energy;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    agree = std::max({agree, max_abs(f.states[i].q - d.states[i].q), max_abs(f.states[i].p - d.states[i].p)});
    const VectorXd& q = f.states[i].q;
    residual = std::max(residual, std::abs(q(0) * q(0) + q(1) * q(1) - 1.0));
    drift = std::max(drift, std::abs(f.diag[i].energy - e0) / std::abs(e0));
  }
  bool ok = f.max_f_norm < 1e-14 && agree < 1e-9 && residual < 1e-8 && drift < 1e-6;
  return {ok, fmt("max ||f|| = %.1e, dirac-flannery %.2e, |x^2+y^2-1| %.2e, energy drift %.2e", f.max_f_norm, agree,
                  residual, drift)};
}

Verdict a6() {
  Loaded sc = load("constant-velocity");
  PhaseState s0 = initial_phase_state(sc.sys, sc.cfg);
  Trajectory tr = integrate_phase(sc.sys, s0, 2.0, Method::flannery, dp45(1e-10), uniform_samples(0.0, 2.0, 201));
  double g_max = 0.0, f_max = tr.max_f_norm, lam_max = 0.0, u_max = 0.0;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    const PhaseState& s = tr.states[i];
    VectorXd qd = legendre_invert(sc.sys, s.t, s.q, s.p, s.lam, {});
    SelfConsistentF sf = self_consistent_f(sc.sys, {s.t, s.q, qd}, s.p, s.lam, Method::flannery);
    g_max = std::max(g_max, sf.field.G.lpNorm<Eigen::Infinity>());
    f_max = std::max(f_max, sf.field.f.lpNorm<Eigen::Infinity>());
    lam_max = std::max(lam_max, max_abs(tr.diag[i].lam));
    u_max = std::max(u_max, max_abs(tr.diag[i].u));
  }
  bool ok = g_max < 1e-14 && f_max < 1e-14 && lam_max < 1e-14 && u_max < 1e-14;
  return {ok, fmt("max |G| %.1e, |f| %.1e, |lam| %.1e, |u| %.1e", g_max, f_max, lam_max, u_max)};
}

Verdict a7() {
  double anti = 0.0, canon = 0.0, deficit = 0.0, reduce = 0.0, hh = 0.0;
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& name : builtin_names()) {
    Loaded sc = load(name);
    const int n = sc.sys.n(), m = sc.sys.m();
    const auto& c = sc.sys.spec().coords;
    std::string q0 = c[0], q1 = c[static_cast<std::size_t>(n - 1)];
    std::vector<Observable> obs = {
        Observable(sc.sys, q0 + "*" + momentum_name(q0) + " + sin(" + q1 + ")*" + momentum_name(q1) + "^2"),
        Observable(sc.sys, momentum_name(q0) + "^2/2 + cos(" + q0 + ")*" + q1 + " + t*" + momentum_name(q1)),
        Observable(sc.sys, m > 0 ? "lam_1*" + q0 + " + plam_1*" + momentum_name(q0) + " + " + q1 + "^3"
                                 : q1 + "*" + momentum_name(q0) + "^3 - " + q0)};
    StateSampler rs(sc.sys, sc.cfg, 20240611);
    MatrixXd zero = MatrixXd::Zero(n, n);
    for (int it = 0; it < 100; ++it) {
      PhaseState s = rs.extended();
      MatrixXd f(n, n);
      for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
      VectorXd pf = f.transpose() * s.p;
      std::vector<PhaseGradient> gs;
      for (const auto& x : obs) gs.push_back(x.gradient(s));
      for (std::size_t a = 0; a < gs.size(); ++a) {
        for (std::size_t b = 0; b < gs.size(); ++b) {
          anti = std::max(anti, std::abs(poisson(gs[a], gs[b]) + poisson(gs[b], gs[a])));
          double lhs = flannery(gs[a], gs[b], s.p, f) + flannery(gs[b], gs[a], s.p, f);
          deficit = std::max(deficit, std::abs(lhs - (gs[a].dp + gs[b].dp).dot(pf)));
          reduce = std::max(reduce, std::abs(flannery(gs[a], gs[b], s.p, zero) - poisson(gs[a], gs[b])));
        }
      }
      for (int i = 0; i < n; ++i) {
        PhaseGradient qi = Observable(sc.sys, c[static_cast<std::size_t>(i)]).gradient(s);
        for (int j = 0; j < n; ++j) {
          PhaseGradient pj = Observable(sc.sys, momentum_name(c[static_cast<std::size_t>(j)])).gradient(s);
          double want = i == j ? 1.0 : 0.0;
          canon = std::max({canon, std::abs(flannery(qi, pj, s.p, f) - want), std::abs(poisson(qi, pj) - want)});
        }
      }
      // {H, H}_FB with the transposition tensor of the actual flow.
      PhaseState on = rs.on_surface(Method::flannery);
      RateContext ctx = rate_context(sc.sys, on, Method::flannery);
      double want = ctx.hamiltonian.dp.dot(ctx.f.transpose() * ctx.state.p);
      double got = flannery(ctx.hamiltonian, ctx.hamiltonian, ctx.state.p, ctx.f);
      hh = std::max(hh, std::abs(got - want));
    }
  }
  bool ok = anti < 1e-12 && canon <= 1e-15 && deficit < 1e-10 && reduce < 1e-14 && hh < 1e-9;
  std::string detail = fmt("antisymmetry %.1e, canonical %.1e, deficit %.1e, f=0 reduction %.1e", anti, canon,
                           deficit, reduce) +
                       fmt(", {H,H}_FB %.1e", hh);
  return {ok, detail};
}

Verdict a8() {
  Loaded sc = load("twist-toy");
  StateSampler rs(sc.sys, sc.cfg, 8888);
  double worst = 0.0;
  for (int it = 0; it < 100; ++it) {
    ConfigState cs = rs.configuration();
    MatrixXd a = velocity_jacobian(sc.sys, cs, VectorXd::Zero(1));
    MatrixXd g = gkj_matrix(sc.sys, cs, VectorXd::Zero(3));
    worst = std::max(worst, solve_f(a, g).residual);
    worst = std::max(worst, solve_f_compatible(a, g, momenta(sc.sys, cs, VectorXd::Zero(1))).residual);
  }
  MatrixXd a(1, 3), g(1, 3), want(3, 3);
  a << -5, 1, 0;
  g << -2, 0, 1;
  want << 10.0 / 26, 0, -5.0 / 26, -2.0 / 26, 0, 1.0 / 26, 0, 0, 0;
  double example = (solve_f(a, g).f - want).lpNorm<Eigen::Infinity>();
  return {worst < 1e-10 && example < 1e-14, fmt("max ||A f - G|| = %.1e, worked example error %.1e", worst, example)};
}

Verdict a9() {
  double grad_err = 0.0, hess_err = 0.0, roundtrip = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (const auto& name : builtin_names()) {
    Loaded sc = load(name);
    std::vector<const expr::Tape*> tapes = {&sc.sys.lagrangian()};
    for (int k = 0; k < sc.sys.m(); ++k) tapes.push_back(&sc.sys.constraint(k));
    const int slots = 2 * sc.sys.n() + 1;
    StateSampler rs(sc.sys, sc.cfg, 909);
    for (int it = 0; it < 100; ++it) {
      ConfigState cs = rs.configuration();
      VectorXd x = sc.sys.slots(cs, VectorXd::Zero(sc.sys.m()));
      for (const expr::Tape* tape : tapes) {
        for (int i = 0; i < slots; ++i) {
          const double h = 1e-5;
          VectorXd up = x, dn = x;
          up(i) += h;
          dn(i) -= h;
          double fd = (tape->eval<double>(as_span<double>(up)) - tape->eval<double>(as_span<double>(dn))) / (2 * h);
          grad_err = std::max(grad_err, rel(tape->partial<double>(as_span<double>(x), i), fd));
          for (int j = 0; j < slots; ++j) {
            double fdh = (tape->partial<double>(as_span<double>(up), j) - tape->partial<double>(as_span<double>(dn), j)) /
                         (2 * h);
            hess_err = std::max(hess_err, rel(tape->second_partial<double>(as_span<double>(x), i, j), fdh));
          }
        }
      }
      VectorXd lam(sc.sys.m());
      for (int k = 0; k < sc.sys.m(); ++k) lam(k) = rs.uniform(-1.0, 1.0);
      VectorXd p = momenta(sc.sys, cs, lam);
      roundtrip = std::max(roundtrip, max_abs(legendre_invert(sc.sys, cs.t, cs.q, p, lam, {}) - cs.qd));
    }
  }
  bool ok = grad_err < 1e-5 && hess_err < 1e-5 && roundtrip < 1e-10;
  return {ok, fmt("gradient rel err %.1e, Hessian rel err %.1e, Legendre roundtrip %.1e", grad_err, hess_err, roundtrip)};
}

Verdict a10() {
  struct Case {
    const char* scenario;
    Method method;
  };
  const Case cases[] = {{"rolling-sphere", Method::flannery},
                        {"rolling-sphere", Method::dirac},
                        {"rod-pendulum", Method::flannery},
                        {"twist-toy", Method::flannery},
                        {"constant-velocity", Method::flannery}};
  const double h = 1e-3;
  const double offsets[] = {-2 * h, -h, 0.0, h, 2 * h};
  double worst = 0.0, plam = 0.0;
  for (const auto& c : cases) {
    Loaded sc = load(c.scenario);
    std::vector<double> ts;
    for (int k = 1; k <= 9; ++k) {
      for (double o : offsets) ts.push_back(0.2 * k + o);
    }
    PhaseState s0 = initial_phase_state(sc.sys, sc.cfg, c.method);
    Trajectory tr = integrate_phase(sc.sys, s0, 2.0, c.method, dp45(1e-12), ts);
    for (const auto& d : tr.diag) plam = std::max(plam, max_abs(d.plam));
    auto stencil = [&](std::size_t base, const std::function<double(std::size_t)>& v) {
      return (v(base) - 8 * v(base + 1) + 8 * v(base + 3) - v(base + 4)) / (12 * h);
    };
    for (std::size_t base = 0; base < ts.size(); base += 5) {
      const PhaseState& s = tr.states[base + 2];
      RateContext ctx = rate_context(sc.sys, s, c.method);
      for (int i = 0; i < sc.sys.n(); ++i) {
        const auto& name = sc.sys.spec().coords[static_cast<std::size_t>(i)];
        double rq = rate(Observable(sc.sys, name).gradient(ctx.state), ctx);
        double rp = rate(Observable(sc.sys, momentum_name(name)).gradient(ctx.state), ctx);
        worst = std::max(worst, std::abs(rq - stencil(base, [&](std::size_t j) { return tr.states[j].q(i); })));
        worst = std::max(worst, std::abs(rp - stencil(base, [&](std::size_t j) { return tr.states[j].p(i); })));
      }
      for (int k = 0; k < sc.sys.m(); ++k) {
        double rg = rate(constraint_gradient(sc.sys, ctx.state, k), ctx);
        worst = std::max(worst, std::abs(rg - stencil(base, [&](std::size_t j) { return tr.diag[j].g(k); })));
      }
    }
  }
  return {worst < 1e-6 && plam < 1e-10, fmt("max rate mismatch %.2e, max |p_lam| %.1e", worst, plam)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* id, const std::function<Verdict()>& criterion) {
    Verdict v;
    try {
      v = criterion();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("%-4s %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  };

  SphereRuns sphere;
  report("A1", [&] { return a1(sphere); });
  report("A2", [&] { return a2(sphere); });
  report("A3", [&] { return a3(sphere); });
  report("A4", [&] { return a4(sphere); });
  report("A5", a5);
  report("A6", a6);
  report("A7", a7);
  report("A8", a8);
  report("A9", a9);
  report("A10", a10);
  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
