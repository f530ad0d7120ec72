#include "cdyn/check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "cdyn/integrate.hpp"

namespace cdyn {

// ---------------------------------------------------------------------------
// StateSampler

StateSampler::StateSampler(const System& sys, const ScenarioConfig& cfg, std::uint64_t seed)
    : sys_(&sys), base_(initial_config(cfg)), rng_(seed) {}

PhaseState StateSampler::extended() {
  const int n = sys_->n();
  const int m = sys_->m();
  PhaseState s;
  s.t = uniform(0.0, 1.0);
  s.q.resize(n);
  s.p.resize(n);
  s.lam.resize(m);
  s.plam.resize(m);
  for (int i = 0; i < n; ++i) s.q(i) = base_.q(i) + uniform(-0.5, 0.5);
  for (int i = 0; i < n; ++i) s.p(i) = uniform(-2.0, 2.0);
  for (int k = 0; k < m; ++k) s.lam(k) = uniform(-1.0, 1.0);
  for (int k = 0; k < m; ++k) s.plam(k) = uniform(-1.0, 1.0);
  return s;
}

ConfigState StateSampler::configuration() {
  const int n = sys_->n();
  ConfigState cs{uniform(0.0, 1.0), VectorXd(n), VectorXd(n)};
  for (int i = 0; i < n; ++i) cs.q(i) = base_.q(i) + uniform(-0.5, 0.5);
  for (int i = 0; i < n; ++i) cs.qd(i) = uniform(-1.0, 1.0);
  return cs;
}

ConfigState StateSampler::on_surface_config() {
  const System& sys = *sys_;
  const int n = sys.n();
  const int m = sys.m();
  ConfigState cs = configuration();
  auto newton = [&](bool positions) {
    for (int it = 0; it < 30; ++it) {
      VectorXd x = sys.slots(cs, VectorXd::Zero(m));
      auto xs = as_span<double>(x);
      VectorXd v = VectorXd::Zero(sys.slot_count());
      for (int i = 0; i < n; ++i) v(sys.slot_q(i)) = cs.qd(i);
      v(sys.slot_t()) = 1.0;
      std::vector<int> rows;
      for (int k = 0; k < m; ++k) {
        if (!positions || !sys.velocity_dependent(k)) rows.push_back(k);
      }
      if (rows.empty()) return;
      const auto r = static_cast<Eigen::Index>(rows.size());
      MatrixXd j(r, n);
      VectorXd res(r);
      for (Eigen::Index a = 0; a < r; ++a) {
        int k = rows[static_cast<std::size_t>(a)];
        const auto& g = sys.constraint(k);
        bool holo = !sys.velocity_dependent(k);
        if (positions) {
          res(a) = g.eval<double>(xs);
        } else {
          res(a) = holo ? g.directional<double>(xs, as_span<double>(v)) : g.eval<double>(xs);
        }
        for (int i = 0; i < n; ++i) {
          j(a, i) = holo ? g.partial<double>(xs, sys.slot_q(i)) : g.partial<double>(xs, sys.slot_qd(i));
        }
      }
      if (res.lpNorm<Eigen::Infinity>() < 1e-14) return;
      VectorXd step = -pseudo_inverse(j) * res;
      if (positions) cs.q += step;
      else cs.qd += step;
    }
  };
  newton(true);
  newton(false);
  return cs;
}

PhaseState StateSampler::on_surface(Method method) {
  const System& sys = *sys_;
  ConfigState cs = on_surface_config();
  PhaseState s{cs.t, cs.q, momenta(sys, cs, VectorXd::Zero(sys.m())), VectorXd::Zero(sys.m()),
               VectorXd::Zero(sys.m())};
  s.lam = solve_multipliers(sys, s.t, s.q, s.p, method, s.lam, cs.qd).lam;
  return s;
}

// ---------------------------------------------------------------------------

namespace {

struct Scenario {
  ScenarioConfig cfg;
  System sys;
};

std::vector<Scenario> all_scenarios() {
  std::vector<Scenario> out;
  for (const auto& name : builtin_names()) {
    ScenarioConfig cfg = builtin(name);
    System sys(cfg.spec);
    out.push_back({std::move(cfg), std::move(sys)});
  }
  return out;
}

bool zero_f(const std::string& name) {
  return name == "rod-pendulum" || name == "constant-velocity" || name == "free-particle";
}

/// A few nonlinear observables over the system's phase-space names.
std::vector<std::string> sample_observables(const System& sys) {
  const auto& c = sys.spec().coords;
  std::string q0 = c[0];
  std::string q1 = c[c.size() > 1 ? 1 : 0];
  std::string p0 = momentum_name(q0);
  std::string p1 = momentum_name(q1);
  std::vector<std::string> xs = {q0 + "*" + p0 + " + sin(" + q1 + ")*" + p1 + "^2",
                                 p0 + "^2/2 + cos(" + q0 + ")*" + q1 + " + t*" + p1};
  if (sys.m() > 0) {
    xs.push_back("lam_1*" + q0 + " + plam_1*" + p0 + " + " + p1 + "*" + q0 + "^2");
  } else {
    xs.push_back(q1 + "*" + p0 + "^3 - " + q0);
  }
  return xs;
}

MatrixXd random_matrix(StateSampler& rs, Eigen::Index n) {
  MatrixXd f(n, n);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rs.uniform(-1.0, 1.0);
  return f;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

PhaseState advance(const PhaseState& s, const PhaseRate& r, double tau) {
  return {s.t + tau, s.q + tau * r.q, s.p + tau * r.p, s.lam + tau * r.lam, s.plam + tau * r.plam};
}

struct Invariant {
  std::string module;
  std::string name;
  double bound;
  std::function<double(const CheckOptions&)> measure;
};

std::vector<Invariant> catalog() {
  std::vector<Invariant> inv;

  inv.push_back({"exprlang", "print-parse-roundtrip", 0.0, [](const CheckOptions&) {
                   double bad = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     std::vector<expr::Expr> es = sc.cfg.spec.constraints;
                     es.push_back(sc.cfg.spec.lagrangian);
                     for (const auto& e : es) {
                       expr::Expr back = expr::parse(expr::to_string(e));
                       if (!(back == e) || expr::to_string(back) != expr::to_string(e)) bad += 1.0;
                     }
                   }
                   return bad;
                 }});

  inv.push_back({"exprlang", "ad-gradient-vs-fd", 1e-5, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed);
                     for (int it = 0; it < o.states; ++it) {
                       ConfigState cs = rs.configuration();
                       VectorXd x = sc.sys.slots(cs, VectorXd::Zero(sc.sys.m()));
                       for (int slot = 0; slot < 2 * sc.sys.n() + 1; ++slot) {
                         const auto& tape = sc.sys.lagrangian();
                         double h = 1e-6 * std::max(1.0, std::abs(x(slot)));
                         VectorXd xp = x, xm = x;
                         xp(slot) += h;
                         xm(slot) -= h;
                         double fd = (tape.eval<double>(as_span<double>(xp)) - tape.eval<double>(as_span<double>(xm))) /
                                     (2 * h);
                         worst = std::max(worst, rel_err(tape.partial<double>(as_span<double>(x), slot), fd));
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"model", "legendre-roundtrip", 1e-10, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 1);
                     for (int it = 0; it < o.states; ++it) {
                       PhaseState s = rs.extended();
                       VectorXd qd = legendre_invert(sc.sys, s.t, s.q, s.p, s.lam, {});
                       VectorXd p = momenta(sc.sys, ConfigState{s.t, s.q, qd}, s.lam);
                       worst = std::max(worst, (p - s.p).lpNorm<Eigen::Infinity>());
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"model", "hamiltonian-envelope", 1e-6, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 2);
                     for (int it = 0; it < std::max(1, o.states / 4); ++it) {
                       PhaseState s = rs.extended();
                       HamiltonianGradient g = grad_hamiltonian(sc.sys, s);
                       auto fd = [&](auto&& bump) {
                         const double h = 1e-6;
                         PhaseState sp = s, sm = s;
                         bump(sp, h);
                         bump(sm, -h);
                         return (hamiltonian(sc.sys, sp) - hamiltonian(sc.sys, sm)) / (2 * h);
                       };
                       for (int i = 0; i < sc.sys.n(); ++i) {
                         worst = std::max(worst, rel_err(g.dq(i), fd([&](PhaseState& z, double h) { z.q(i) += h; })));
                         worst = std::max(worst, rel_err(g.dp(i), fd([&](PhaseState& z, double h) { z.p(i) += h; })));
                       }
                       for (int k = 0; k < sc.sys.m(); ++k) {
                         worst = std::max(worst,
                                          rel_err(g.dlam(k), fd([&](PhaseState& z, double h) { z.lam(k) += h; })));
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"brackets", "poisson-antisymmetry", 1e-12, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 3);
                     auto srcs = sample_observables(sc.sys);
                     std::vector<Observable> obs;
                     for (const auto& src : srcs) obs.emplace_back(sc.sys, src);
                     for (int it = 0; it < o.states; ++it) {
                       PhaseState s = rs.extended();
                       for (std::size_t a = 0; a < obs.size(); ++a) {
                         for (std::size_t b = 0; b < obs.size(); ++b) {
                           worst = std::max(worst, std::abs(poisson(obs[a], obs[b], s) + poisson(obs[b], obs[a], s)));
                         }
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"brackets", "canonical-pairs", 1e-15, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 4);
                     PhaseState s = rs.extended();
                     MatrixXd f = random_matrix(rs, sc.sys.n());
                     for (int i = 0; i < sc.sys.n(); ++i) {
                       Observable qi(sc.sys, sc.sys.spec().coords[static_cast<std::size_t>(i)]);
                       for (int j = 0; j < sc.sys.n(); ++j) {
                         Observable pj(sc.sys, momentum_name(sc.sys.spec().coords[static_cast<std::size_t>(j)]));
                         double want = i == j ? 1.0 : 0.0;
                         worst = std::max(worst, std::abs(flannery(qi.gradient(s), pj.gradient(s), s.p, f) - want));
                         worst = std::max(worst, std::abs(poisson(qi, pj, s) - want));
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"brackets", "flannery-antisymmetry-deficit", 1e-10, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 5);
                     std::vector<Observable> obs;
                     for (const auto& src : sample_observables(sc.sys)) obs.emplace_back(sc.sys, src);
                     for (int it = 0; it < o.states; ++it) {
                       PhaseState s = rs.extended();
                       MatrixXd f = random_matrix(rs, sc.sys.n());
                       VectorXd pf = f.transpose() * s.p;
                       for (std::size_t a = 0; a < obs.size(); ++a) {
                         for (std::size_t b = 0; b < obs.size(); ++b) {
                           PhaseGradient x = obs[a].gradient(s), y = obs[b].gradient(s);
                           double lhs = flannery(x, y, s.p, f) + flannery(y, x, s.p, f);
                           worst = std::max(worst, std::abs(lhs - (x.dp + y.dp).dot(pf)));
                         }
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"brackets", "flannery-poisson-reduction", 1e-14, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 6);
                     std::vector<Observable> obs;
                     for (const auto& src : sample_observables(sc.sys)) obs.emplace_back(sc.sys, src);
                     MatrixXd zero = MatrixXd::Zero(sc.sys.n(), sc.sys.n());
                     for (int it = 0; it < o.states; ++it) {
                       PhaseState s = rs.extended();
                       for (const auto& x : obs) {
                         for (const auto& y : obs) {
                           double fb = flannery(x.gradient(s), y.gradient(s), s.p, zero);
                           worst = std::max(worst, std::abs(fb - poisson(x, y, s)));
                         }
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"brackets", "transposition-residual", 1e-10, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     if (sc.sys.m() == 0 || !sc.sys.linear_in_velocity()) continue;
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 7);
                     for (int it = 0; it < o.states; ++it) {
                       ConfigState cs = rs.configuration();
                       MatrixXd a = velocity_jacobian(sc.sys, cs, VectorXd::Zero(sc.sys.m()));
                       if (a.isZero(0.0)) continue;
                       MatrixXd g = gkj_matrix(sc.sys, cs, VectorXd::Zero(sc.sys.n()));
                       worst = std::max(worst, solve_f(a, g).residual);
                       VectorXd p = momenta(sc.sys, cs, VectorXd::Zero(sc.sys.m()));
                       worst = std::max(worst, solve_f_compatible(a, g, p).residual);
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"dynamics", "rate-consistency", 1e-8, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 8);
                     for (int it = 0; it < std::max(1, o.states / 4); ++it) {
                       for (Method method : {Method::dirac, Method::flannery}) {
                         PhaseState s = rs.on_surface(method);
                         RateContext ctx = rate_context(sc.sys, s, method);
                         PhaseRate r = rhs(sc.sys, ctx.state, method);
                         const double tau = 1e-6;
                         PhaseState sp = advance(ctx.state, r, tau), sm = advance(ctx.state, r, -tau);
                         double fd_h = (hamiltonian(sc.sys, sp) - hamiltonian(sc.sys, sm)) / (2 * tau);
                         worst = std::max(worst, rel_err(rate(ctx.hamiltonian, ctx), fd_h));
                         for (int i = 0; i < sc.sys.n(); ++i) {
                           Observable q(sc.sys, sc.sys.spec().coords[static_cast<std::size_t>(i)]);
                           Observable p(sc.sys, momentum_name(sc.sys.spec().coords[static_cast<std::size_t>(i)]));
                           worst = std::max(worst, rel_err(rate(q.gradient(ctx.state), ctx), r.q(i)));
                           worst = std::max(worst, rel_err(rate(p.gradient(ctx.state), ctx), r.p(i)));
                         }
                         for (int k = 0; k < sc.sys.m(); ++k) {
                           auto g_at = [&](const PhaseState& z) {
                             VectorXd qd = legendre_invert(sc.sys, z.t, z.q, z.p, z.lam, {});
                             return constraint_values(sc.sys, ConfigState{z.t, z.q, qd})(k);
                           };
                           double fd_g = (g_at(sp) - g_at(sm)) / (2 * tau);
                           double an = rate(constraint_gradient(sc.sys, ctx.state, k), ctx);
                           worst = std::max(worst, rel_err(an, fd_g));
                         }
                       }
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"dynamics", "plam-rate-vanishes", 1e-10, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     if (sc.sys.m() == 0) continue;
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 9);
                     for (int it = 0; it < std::max(1, o.states / 4); ++it) {
                       PhaseState s = rs.on_surface(Method::flannery);
                       worst = std::max(worst, rhs(sc.sys, s, Method::flannery).plam.lpNorm<Eigen::Infinity>());
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"dynamics", "multiplier-idempotence", 1e-13, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     if (sc.sys.m() == 0) continue;
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 10);
                     for (int it = 0; it < std::max(1, o.states / 4); ++it) {
                       PhaseState s = rs.on_surface(Method::flannery);
                       auto a = solve_multipliers(sc.sys, s.t, s.q, s.p, Method::flannery, s.lam);
                       auto b = solve_multipliers(sc.sys, s.t, s.q, s.p, Method::flannery, a.lam);
                       worst = std::max(worst, (a.lam - b.lam).lpNorm<Eigen::Infinity>());
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"dynamics", "method-equivalence-f-zero", 1e-14, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     if (!zero_f(sc.cfg.spec.name)) continue;
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 11);
                     for (int it = 0; it < std::max(1, o.states / 4); ++it) {
                       PhaseState s = rs.on_surface(Method::flannery);
                       PhaseRate a = rhs(sc.sys, s, Method::dirac);
                       PhaseRate b = rhs(sc.sys, s, Method::flannery);
                       worst = std::max({worst, (a.q - b.q).lpNorm<Eigen::Infinity>(),
                                         (a.p - b.p).lpNorm<Eigen::Infinity>()});
                       if (sc.sys.m() > 0) worst = std::max(worst, (a.lam - b.lam).lpNorm<Eigen::Infinity>());
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"oracle", "oracle-system-residual", 1e-10, [](const CheckOptions& o) {
                   double worst = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     StateSampler rs(sc.sys, sc.cfg, o.seed + 12);
                     for (int it = 0; it < o.states; ++it) {
                       worst = std::max(worst, lda_rhs(sc.sys, rs.on_surface_config()).residual);
                     }
                   }
                   return worst;
                 }});

  inv.push_back({"integrate", "dp45-linear-flow", 1e-11, [](const CheckOptions&) {
                   ScenarioConfig cfg = builtin("free-particle");
                   System sys(cfg.spec);
                   IntegratorOpts opts;
                   opts.rel_tol = opts.abs_tol = 1e-12;
                   Trajectory tr = integrate_phase(sys, initial_phase_state(sys, cfg), 2.0, Method::flannery, opts,
                                                   uniform_samples(0.0, 2.0, 3));
                   return std::abs(tr.states.back().q(0) - 6.0);
                 }});

  inv.push_back({"integrate", "projection-fixed-point", 1e-12, [](const CheckOptions& o) {
                   ScenarioConfig cfg = builtin("rod-pendulum");
                   System sys(cfg.spec);
                   StateSampler rs(sys, cfg, o.seed + 13);
                   PhaseState s = rs.on_surface(Method::flannery);
                   PhaseState same = project(sys, s, Method::flannery);
                   double worst = std::max((same.q - s.q).lpNorm<Eigen::Infinity>(),
                                           (same.p - s.p).lpNorm<Eigen::Infinity>());
                   PhaseState off = s;
                   off.q *= std::sqrt(1.0 + 1e-6);
                   PhaseState back = project(sys, off, Method::flannery);
                   return std::max(worst, constraint_residual(sys, back, Method::flannery));
                 }});

  inv.push_back({"scenarios", "builtin-initial-valid", 0.0, [](const CheckOptions&) {
                   double bad = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     try {
                       check_initial(sc.sys, sc.cfg, 1e-12);
                       initial_phase_state(sc.sys, sc.cfg);
                     } catch (const Error&) {
                       bad += 1.0;
                     }
                   }
                   return bad;
                 }});

  inv.push_back({"scenarios", "json-roundtrip", 0.0, [](const CheckOptions&) {
                   double bad = 0.0;
                   for (const auto& sc : all_scenarios()) {
                     ScenarioConfig back = parse_config(to_json(sc.cfg));
                     if (to_json(back) != to_json(sc.cfg)) bad += 1.0;
                     if (back.spec.coords != sc.cfg.spec.coords || back.spec.params != sc.cfg.spec.params) bad += 1.0;
                   }
                   return bad;
                 }});

  return inv;
}

}  // namespace

std::vector<std::string> invariant_names() {
  std::vector<std::string> out;
  for (const auto& i : catalog()) out.push_back(i.module + "/" + i.name);
  return out;
}

std::vector<InvariantResult> run_invariants(const CheckOptions& opts) {
  std::vector<InvariantResult> out;
  for (const auto& inv : catalog()) {
    if (!opts.filter.empty() && opts.filter != inv.module && opts.filter != inv.name) continue;
    InvariantResult r{inv.module, inv.name, false, 0.0, inv.bound, {}};
    try {
      r.value = inv.measure(opts);
      r.passed = r.value <= inv.bound;
      std::ostringstream os;
      os.precision(3);
      os << "worst " << r.value << " (bound " << inv.bound << ")";
      r.detail = os.str();
    } catch (const std::exception& e) {
      r.detail = std::string("error: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cdyn
