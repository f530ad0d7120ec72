#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cdyn/integrate.hpp"
#include "support.hpp"

using namespace cdyn;
using testing::load;
using testing::make_system;
using testing::vec;

namespace {

VectorXd oscillator(double, const VectorXd& y) { return vec({y(1), -y(0)}); }
VectorXd quartic_well(double, const VectorXd& y) { return vec({y(1), -y(0) * y(0) * y(0)}); }

IntegratorOpts dp45(double tol) {
  IntegratorOpts o;
  o.scheme = Scheme::dp45;
  o.rel_tol = o.abs_tol = tol;
  return o;
}

IntegratorOpts rk4(double dt) {
  IntegratorOpts o;
  o.scheme = Scheme::rk4;
  o.dt = dt;
  return o;
}

}  // namespace

TEST_CASE("enum names") {
  CHECK(to_string(Scheme::dp45) == "dp45");
  CHECK(to_string(Stabilization::projection) == "projection");
  CHECK(stabilization_from_string("none") == Stabilization::none);
  CHECK_FALSE(stabilization_from_string("clip").has_value());
}

TEST_CASE("option validation") {
  IntegratorOpts o;
  CHECK_NOTHROW(validate(o));
  o.rel_tol = 0.0;
  CHECK_THROWS_AS(validate(o), Error);
  o = {};
  o.max_steps = 0;
  CHECK_THROWS_AS(validate(o), Error);
  o = rk4(-1.0);
  CHECK_THROWS_AS(validate(o), Error);
}

TEST_CASE("uniform samples include both ends") {
  std::vector<double> s = uniform_samples(0.0, 2.0, 5);
  CHECK(s == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0});
}

TEST_CASE("linear flow") {
  OdeRhs f = [](double, const VectorXd& y) { return vec({y(1), 0.0}); };
  OdeSolution sol = integrate(f, 0.0, vec({0, 3}), 2.0, dp45(1e-12), {0.0, 1.0, 2.0});
  CHECK(std::abs(sol.states.back()(0) - 6.0) < 1e-11);
  CHECK(std::abs(sol.states[1](0) - 3.0) < 1e-11);
  CHECK(sol.step_index.front() == 0);

  auto free = load("free-particle");
  PhaseState s0 = initial_phase_state(free.sys, free.cfg);
  Trajectory tr = integrate_phase(free.sys, s0, 2.0, Method::flannery, dp45(1e-12), {0.0, 2.0});
  CHECK(std::abs(tr.states.back().q(0) - 6.0) < 1e-11);
}

TEST_CASE("harmonic oscillator over ten periods") {
  const double t_end = 20 * std::numbers::pi;
  std::vector<double> ts = uniform_samples(0.0, t_end, 1001);
  OdeSolution sol = integrate(oscillator, 0.0, vec({1, 0}), t_end, dp45(1e-10), ts);
  double worst_e = 0.0, worst_x = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const VectorXd& y = sol.states[i];
    worst_e = std::max(worst_e, std::abs(0.5 * (y(0) * y(0) + y(1) * y(1)) - 0.5) / 0.5);
    worst_x = std::max(worst_x, std::abs(y(0) - std::cos(ts[i])));
  }
  CHECK(worst_e < 1e-8);
  CHECK(worst_x < 1e-8);
  CHECK(sol.accepted > 10);

  // Same system through the phase-space path.
  System osc = make_system({"x"}, "0.5*x_dot^2 - 0.5*x^2");
  PhaseState s0{0.0, vec({1}), vec({0}), VectorXd(), VectorXd()};
  Trajectory tr = integrate_phase(osc, s0, t_end, Method::dirac, dp45(1e-10), ts);
  double e0 = tr.diag.front().energy;
  for (const auto& d : tr.diag) CHECK(std::abs(d.energy - e0) / std::abs(e0) < 1e-8);
}

TEST_CASE("drift abort on a broken right-hand side") {
  OdeRhs broken = [](double, const VectorXd&) { return vec({1.0}); };
  StepHooks hooks;
  hooks.drift = [](double, const VectorXd& y) { return std::abs(y(0)); };
  IntegratorOpts o = rk4(1e-4);
  o.drift_abort = 1e-3;
  try {
    integrate(broken, 0.0, vec({0}), 1.0, o, {1.0}, hooks);
    FAIL("expected DriftAbort");
  } catch (const DriftAbort& e) {
    CHECK(e.time() > 1e-3 - 1e-12);
    CHECK(e.time() < 1.2e-3);
    CHECK(e.residual() > 1e-3);
  }
}

TEST_CASE("step limits") {
  IntegratorOpts o = rk4(1e-3);
  o.max_steps = 5;
  CHECK_THROWS_AS(integrate(oscillator, 0.0, vec({1, 0}), 1.0, o, {1.0}), MaxStepsExceeded);

  OdeRhs blowup = [](double, const VectorXd& y) { return vec({y(0) * y(0)}); };
  CHECK_THROWS_AS(integrate(blowup, 0.0, vec({1}), 2.0, dp45(1e-10), {2.0}), NumericalError);
}

TEST_CASE("rk4 is fourth order") {
  OdeSolution ref = integrate(quartic_well, 0.0, vec({1, 0}), 2.0, dp45(1e-14), {2.0});
  std::vector<double> errs;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    OdeSolution sol = integrate(quartic_well, 0.0, vec({1, 0}), 2.0, rk4(dt), {2.0});
    errs.push_back((sol.states.back() - ref.states.back()).lpNorm<Eigen::Infinity>());
  }
  for (std::size_t i = 1; i < errs.size(); ++i) {
    double ratio = errs[i - 1] / errs[i];
    CAPTURE(ratio);
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
  }
}

TEST_CASE("dp45 error decreases with tolerance on the pendulum") {
  auto pend = load("rod-pendulum");
  PhaseState s0 = initial_phase_state(pend.sys, pend.cfg);
  Trajectory ref = integrate_phase(pend.sys, s0, 2.0, Method::flannery, dp45(1e-13), {2.0});
  double prev = std::numeric_limits<double>::infinity();
  for (double tol = 1e-5; tol > 1e-9; tol /= 2) {
    Trajectory tr = integrate_phase(pend.sys, s0, 2.0, Method::flannery, dp45(tol), {2.0});
    double err = (tr.states.back().q - ref.states.back().q).lpNorm<Eigen::Infinity>();
    CAPTURE(tol);
    CHECK(err <= prev);
    prev = err;
  }
}

TEST_CASE("trajectory shape") {
  auto sphere = load("rolling-sphere");
  PhaseState s0 = initial_phase_state(sphere.sys, sphere.cfg);
  std::vector<double> ts = uniform_samples(0.0, 1.0, 51);
  Trajectory tr = integrate_phase(sphere.sys, s0, 1.0, Method::flannery, dp45(1e-10), ts);
  REQUIRE(tr.times.size() == ts.size());
  REQUIRE(tr.diag.size() == ts.size());
  for (std::size_t i = 1; i < tr.times.size(); ++i) CHECK(tr.times[i] > tr.times[i - 1]);
  for (std::size_t i = 0; i < tr.states.size(); ++i) {
    CHECK(tr.states[i].q.allFinite());
    CHECK(tr.states[i].p.allFinite());
    CHECK(tr.diag[i].g.lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(tr.diag[i].plam.lpNorm<Eigen::Infinity>() < 1e-10);
    if (i == 0) continue;
    CHECK(tr.diag[i].step > 0.0);
    CHECK(tr.diag[i].newton_iterations >= tr.diag[i - 1].newton_iterations);
  }
  CHECK(tr.accepted > 0);
  CHECK(tr.diag.back().newton_iterations > 0);
}

TEST_CASE("projection") {
  auto pend = load("rod-pendulum");
  PhaseState s0 = initial_phase_state(pend.sys, pend.cfg);

  PhaseState same = project(pend.sys, s0, Method::flannery);
  CHECK((same.q - s0.q).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK((same.p - s0.p).lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK((same.lam - s0.lam).lpNorm<Eigen::Infinity>() <= 1e-15);

  PhaseState off = s0;
  off.q *= std::sqrt(1 + 1e-6);
  CHECK(constraint_residual(pend.sys, off, Method::flannery) == doctest::Approx(1e-6).epsilon(1e-6));
  PhaseState fixed = project(pend.sys, off, Method::flannery);
  CHECK(constraint_residual(pend.sys, fixed, Method::flannery) < 1e-12);

  PhaseState far = s0;
  far.q *= std::sqrt(11.0);
  CHECK_THROWS_AS(project(pend.sys, far, Method::flannery), NoConvergence);

  // Velocity constraints are met by the solved multipliers for any p; q stays put.
  auto toy = load("twist-toy");
  PhaseState t0 = initial_phase_state(toy.sys, toy.cfg);
  PhaseState bent = t0;
  bent.p(1) += 1e-5;
  PhaseState back = project(toy.sys, bent, Method::flannery);
  CHECK(back.q == bent.q);
  CHECK(constraint_residual(toy.sys, back, Method::flannery) < 1e-12);
}

TEST_CASE("projection keeps a long pendulum run on the surface") {
  auto pend = load("rod-pendulum");
  PhaseState s0 = initial_phase_state(pend.sys, pend.cfg);
  IntegratorOpts o = rk4(2e-2);
  o.stabilization = Stabilization::projection;
  Trajectory tr = integrate_phase(pend.sys, s0, 5.0, Method::flannery, o, uniform_samples(0, 5, 11));
  for (const auto& d : tr.diag) CHECK(d.g.lpNorm<Eigen::Infinity>() < 1e-12);

  o.stabilization = Stabilization::none;
  Trajectory loose = integrate_phase(pend.sys, s0, 5.0, Method::flannery, o, uniform_samples(0, 5, 11));
  CHECK(loose.diag.back().g.lpNorm<Eigen::Infinity>() > 1e-12);
}
