#include "cdyn/oracle.hpp"

#include <cmath>

namespace cdyn {

namespace {
constexpr double kMaxCondition = 1e12;
}

OracleRhs lda_rhs(const System& sys, const ConfigState& cs) {
  const int n = sys.n();
  const int m = sys.m();
  VectorXd x = sys.slots(cs, VectorXd::Zero(m));
  auto xs = as_span<double>(x);
  const auto& lag = sys.lagrangian();

  VectorXd v = VectorXd::Zero(sys.slot_count());
  for (int i = 0; i < n; ++i) v(sys.slot_q(i)) = cs.qd(i);
  v(sys.slot_t()) = 1.0;
  auto vs = as_span<double>(v);

  MatrixXd mass(n, n);
  VectorXd force(n);
  VectorXd e = VectorXd::Zero(sys.slot_count());
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) mass(i, j) = mass(j, i) = lag.second_partial<double>(xs, sys.slot_qd(i), sys.slot_qd(j));
    e(sys.slot_qd(i)) = 1.0;
    force(i) = lag.partial<double>(xs, sys.slot_q(i)) - lag.second_directional<double>(xs, as_span<double>(e), vs);
    e(sys.slot_qd(i)) = 0.0;
  }
  double cond = condition_number(mass);
  if (!(cond <= kMaxCondition)) throw SingularMass("mass matrix is singular (condition estimate " + std::to_string(cond) + ")");

  MatrixXd a(m, n);
  VectorXd b(m);
  VectorXd sign(m);
  for (int k = 0; k < m; ++k) {
    const auto& g = sys.constraint(k);
    bool velocity = sys.velocity_dependent(k);
    for (int j = 0; j < n; ++j) a(k, j) = g.partial<double>(xs, velocity ? sys.slot_qd(j) : sys.slot_q(j));
    b(k) = velocity ? -g.directional<double>(xs, vs) : -g.second_directional<double>(xs, vs, vs);
    sign(k) = velocity ? -1.0 : 1.0;
  }

  MatrixXd kkt = MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = mass;
  kkt.topRightCorner(n, m) = a.transpose() * sign.asDiagonal();
  kkt.bottomLeftCorner(m, n) = a;
  VectorXd rhs(n + m);
  rhs << force, b;
  cond = condition_number(kkt);
  if (!(cond <= kMaxCondition)) {
    throw SingularConstraintBlock("constraint block is singular (condition estimate " + std::to_string(cond) + ")");
  }
  VectorXd sol = kkt.fullPivLu().solve(rhs);
  OracleRhs out;
  out.qdd = sol.head(n);
  out.mu = sol.tail(m);
  out.residual = (kkt * sol - rhs).lpNorm<Eigen::Infinity>();
  return out;
}

RollingSphereMotion rolling_sphere_analytic(double t, const RollingSphereParams& params) {
  double accel = 5.0 / 7.0 * params.g_e * std::sin(params.alpha);
  return {0.5 * accel * t * t, accel * t, params.omega_z0};
}

}  // namespace cdyn
