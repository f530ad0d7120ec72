#include <doctest.h>

#include <cmath>
#include <random>

#include "cdyn/check.hpp"
#include "support.hpp"

using namespace cdyn;
using testing::load;
using testing::make_system;
using testing::vec;

namespace {

System twist() { return make_system({"q1", "q2", "q3"}, "0.5*(q1_dot^2 + q2_dot^2 + q3_dot^2)", {"q2_dot - q3*q1_dot"}); }

MatrixXd row(std::initializer_list<double> v) { return vec(v).transpose(); }

MatrixXd symplectic(int n, int m) {
  const int dim = 2 * n + 2 * m + 1;
  MatrixXd j = MatrixXd::Zero(dim, dim);
  for (int i = 0; i < n; ++i) {
    j(i, n + i) = 1.0;
    j(n + i, i) = -1.0;
  }
  for (int k = 0; k < m; ++k) {
    j(2 * n + k, 2 * n + m + k) = 1.0;
    j(2 * n + m + k, 2 * n + k) = -1.0;
  }
  return j;
}

struct Jet {
  VectorXd grad;
  MatrixXd hess;
};

Jet jet(const Observable& x, const PhaseState& s) {
  VectorXd v = x.slots(s);
  auto vs = as_span<double>(v);
  const auto dim = v.size();
  Jet out{VectorXd(dim), MatrixXd(dim, dim)};
  for (Eigen::Index a = 0; a < dim; ++a) {
    out.grad(a) = x.tape().partial<double>(vs, static_cast<int>(a));
    for (Eigen::Index b = 0; b < dim; ++b) {
      out.hess(a, b) = x.tape().second_partial<double>(vs, static_cast<int>(a), static_cast<int>(b));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("velocity jacobian") {
  auto pend = load("rod-pendulum");
  ConfigState pc{0.0, vec({0.6, 0.8}), vec({0.1, -0.2})};
  CHECK(velocity_jacobian(pend.sys, pc, vec({0})).isZero(0.0));

  System tw = twist();
  ConfigState tc{0.0, vec({0, 0, 5}), vec({1, 0, 2})};
  CHECK(velocity_jacobian(tw, tc, vec({0})) == row({-5, 1, 0}));

  auto sphere = load("rolling-sphere");
  MatrixXd a = velocity_jacobian(sphere.sys, initial_config(sphere.cfg), VectorXd::Zero(2));
  MatrixXd want = row({1, 0, 0, 0, 1});
  CHECK((a.row(0) - want).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("transposition matrix G") {
  System integrable = make_system({"q1", "q2"}, "0.5*(q1_dot^2 + q2_dot^2)", {"q1_dot - c"}, {{"c", 1.0}});
  ConfigState ic{0.0, vec({0.3, 0.4}), vec({1, 2})};
  CHECK(gkj_matrix(integrable, ic, vec({0, 0})).isZero(0.0));

  System tw = twist();
  ConfigState tc{0.0, vec({0, 0, 5}), vec({1, 7, 2})};
  CHECK((gkj_matrix(tw, tc, vec({0.3, -0.1, 0.2})) - row({-2, 0, 1})).lpNorm<Eigen::Infinity>() < 1e-15);

  auto pend = load("rod-pendulum");
  ConfigState pc{0.0, vec({0.6, 0.8}), vec({0, 0})};
  CHECK((gkj_matrix(pend.sys, pc, vec({0, 0})) - row({-1.2, -1.6})).lpNorm<Eigen::Infinity>() < 1e-15);

  // Cross-check against finite differences of dg/dq_dot along a path q(t).
  ConfigState c{0.2, vec({0.1, -0.3, 0.7}), vec({0.5, 0.2, -0.4})};
  VectorXd qdd = vec({0.3, 0.1, -0.2});
  MatrixXd g = gkj_matrix(tw, c, qdd);
  const double h = 1e-6;
  auto a_at = [&](double tau) {
    ConfigState z{c.t + tau, c.q + tau * c.qd + 0.5 * tau * tau * qdd, c.qd + tau * qdd};
    return velocity_jacobian(tw, z, vec({0}));
  };
  MatrixXd dadt = (a_at(h) - a_at(-h)) / (2 * h);
  MatrixXd dgdq(1, 3);
  for (int j = 0; j < 3; ++j) {
    ConfigState up = c, dn = c;
    up.q(j) += h;
    dn.q(j) -= h;
    dgdq(0, j) = (constraint_values(tw, up)(0) - constraint_values(tw, dn)(0)) / (2 * h);
  }
  CHECK((g - (dadt - dgdq)).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("solve_f worked example and degenerations") {
  TranspositionField tf = solve_f(row({-5, 1, 0}), row({-2, 0, 1}));
  MatrixXd want(3, 3);
  want << 10.0 / 26, 0, -5.0 / 26, -2.0 / 26, 0, 1.0 / 26, 0, 0, 0;
  CHECK((tf.f - want).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK(tf.residual < 1e-14);

  CHECK(solve_f(MatrixXd::Zero(1, 2), row({-1.2, -1.6})).f.isZero(0.0));
  CHECK(solve_f(row({1, 0}), MatrixXd::Zero(1, 2)).f.isZero(0.0));
  CHECK(solve_f(MatrixXd::Zero(0, 3), MatrixXd::Zero(0, 3)).f.isZero(0.0));

  // Rank-deficient A: least squares, residual reported.
  MatrixXd a(2, 3);
  a << 1, 0, 0, 2, 0, 0;
  MatrixXd g(2, 3);
  g << 1, 0, 0, 0, 0, 0;
  CHECK(solve_f(a, g).residual > 0.1);
}

TEST_CASE("solve_f is the minimum-norm solution") {
  std::mt19937_64 rng(424242);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int it = 0; it < 50; ++it) {
    MatrixXd a(2, 5), g(2, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = u(rng);
    TranspositionField tf = solve_f(a, g);
    MatrixXd oracle = a.completeOrthogonalDecomposition().solve(g);
    CHECK(tf.residual < 1e-10);
    CHECK((tf.f - oracle).lpNorm<Eigen::Infinity>() < 1e-12);

    // Any other solution is at least as large.
    MatrixXd kernel = a.fullPivLu().kernel();
    MatrixXd other = tf.f + kernel * MatrixXd::Random(kernel.cols(), 5);
    CHECK((a * other - g).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(other.norm() >= tf.f.norm());
  }
}

TEST_CASE("momentum-compatible f") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int it = 0; it < 50; ++it) {
    MatrixXd a(2, 5), g(2, 5);
    VectorXd p(5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
    TranspositionField tf = solve_f_compatible(a, g, p);
    CHECK(tf.residual < 1e-10);
    MatrixXd proj = MatrixXd::Identity(5, 5) - a.completeOrthogonalDecomposition().pseudoInverse() * a;
    CHECK((proj * tf.f.transpose() * p).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  CHECK(solve_f_compatible(MatrixXd::Zero(1, 2), row({1, 2}), vec({1, 1})).f.isZero(0.0));
  CHECK(solve_f_compatible(row({1, 0}), MatrixXd::Zero(1, 2), vec({1, 1})).f.isZero(0.0));
}

TEST_CASE("poisson bracket examples") {
  System tw = twist();
  PhaseState s{0.0, vec({2, 0.5, -1}), vec({0.3, 0.2, 0.1}), vec({0.4}), vec({0})};
  CHECK(poisson(Observable(tw, "q1"), Observable(tw, "p_q1"), s) == 1.0);
  CHECK(poisson(Observable(tw, "lam_1"), Observable(tw, "plam_1"), s) == 1.0);
  CHECK(poisson(Observable(tw, "q1*p_q1"), Observable(tw, "q1"), s) == -2.0);
  CHECK(poisson(Observable(tw, "q1"), Observable(tw, "q2"), s) == 0.0);
  CHECK_THROWS_AS(Observable(tw, "q1_dot"), UnboundVariable);
}

TEST_CASE("flannery bracket examples") {
  System one = make_system({"q"}, "0.5*q_dot^2");
  PhaseState s{0.0, vec({0.7}), vec({2}), VectorXd(), VectorXd()};
  TranspositionField tf{MatrixXd(0, 1), MatrixXd(0, 1), MatrixXd::Constant(1, 1, 0.5), 0.0};
  Observable q(one, "q"), p(one, "p_q");
  CHECK(flannery(p, q, s, tf) == 0.0);
  CHECK(flannery(q, p, s, tf) == 1.0);
  tf.f(0, 0) = -3.0;
  CHECK(flannery(q, p, s, tf) == 1.0);
  tf.f(0, 0) = 0.0;
  CHECK(flannery(p, q, s, tf) == poisson(p, q, s));
}

TEST_CASE("bracket properties on random states") {
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    auto sc = load(name);
    const int n = sc.sys.n(), m = sc.sys.m();
    const auto& c = sc.sys.spec().coords;
    std::string q0 = c[0], q1 = c[static_cast<std::size_t>(n - 1)];
    std::vector<Observable> obs = {
        Observable(sc.sys, q0 + "^2*" + momentum_name(q1) + " - " + q1 + "*" + momentum_name(q0) + "^3"),
        Observable(sc.sys, momentum_name(q0) + "*" + momentum_name(q1) + " + " + q0 + "*" + q1 + "^2"),
        Observable(sc.sys, m > 0 ? "lam_1*" + q0 + " + plam_1^2*" + momentum_name(q1) + " + t*" + q1
                                 : q1 + "^3 - 2*" + momentum_name(q0) + "*" + q0)};
    MatrixXd j = symplectic(n, m);
    StateSampler rs(sc.sys, sc.cfg, 5150);
    for (int it = 0; it < 20; ++it) {
      PhaseState s = rs.extended();
      MatrixXd f(n, n);
      for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
      TranspositionField tf{MatrixXd(m, n), MatrixXd(m, n), f, 0.0};
      VectorXd pf = f.transpose() * s.p;
      for (const auto& x : obs) {
        for (const auto& y : obs) {
          CHECK(std::abs(poisson(x, y, s) + poisson(y, x, s)) < 1e-12);
          PhaseGradient gx = x.gradient(s), gy = y.gradient(s);
          double deficit = flannery(x, y, s, tf) + flannery(y, x, s, tf);
          CHECK(std::abs(deficit - (gx.dp + gy.dp).dot(pf)) < 1e-10);
        }
      }
      // Jacobi identity with exact second derivatives.
      Jet a = jet(obs[0], s), b = jet(obs[1], s), d = jet(obs[2], s);
      auto bracket_grad = [&](const Jet& y, const Jet& z) {
        return VectorXd(y.hess * j * z.grad - z.hess * j * y.grad);
      };
      double jacobi = a.grad.dot(j * bracket_grad(b, d)) + b.grad.dot(j * bracket_grad(d, a)) +
                      d.grad.dot(j * bracket_grad(a, b));
      CHECK(std::abs(jacobi) < 1e-8);
      // The jet gradient agrees with the bracket module's gradient.
      CHECK(std::abs(a.grad.dot(j * b.grad) - poisson(obs[0], obs[1], s)) < 1e-12);
    }
  }
}

TEST_CASE("fault injection perturbs solve_f") {
  inject_solve_f_fault(1e-3);
  TranspositionField tf = solve_f(row({-5, 1, 0}), row({-2, 0, 1}));
  inject_solve_f_fault(0.0);
  CHECK(tf.residual > 1e-4);
  CHECK(solve_f(row({-5, 1, 0}), row({-2, 0, 1})).residual < 1e-14);
}
