#include "cdyn/brackets.hpp"

#include <atomic>

namespace cdyn {

MatrixXd velocity_jacobian(const System& sys, const ConfigState& cs, const VectorXd& lam) {
  VectorXd x = sys.slots(cs, lam.size() == sys.m() ? lam : VectorXd::Zero(sys.m()));
  return velocity_jacobian_t<double>(sys, x);
}

MatrixXd gkj_matrix(const System& sys, const ConfigState& cs, const VectorXd& qdd) {
  VectorXd x = sys.slots(cs, VectorXd::Zero(sys.m()));
  return gkj_t<double>(sys, x, qdd);
}

namespace {

std::atomic<double> solve_f_fault{0.0};

TranspositionField finish(const MatrixXd& a, const MatrixXd& g, MatrixXd f) {
  double fault = solve_f_fault.load();
  if (fault != 0.0 && f.size() > 0) f(0, 0) += fault;
  TranspositionField tf{a, g, std::move(f), 0.0};
  if (a.rows() > 0) tf.residual = (a * tf.f - g).lpNorm<Eigen::Infinity>();
  return tf;
}

}  // namespace

void inject_solve_f_fault(double offset) { solve_f_fault.store(offset); }

TranspositionField solve_f(const MatrixXd& A, const MatrixXd& G) {
  const Eigen::Index n = A.cols();
  if (A.isZero(0.0) || G.isZero(0.0)) return finish(A, G, MatrixXd::Zero(n, n));
  return finish(A, G, pseudo_inverse(A) * G);
}

TranspositionField solve_f_compatible(const MatrixXd& A, const MatrixXd& G, const VectorXd& P) {
  const Eigen::Index n = A.cols();
  if (A.isZero(0.0) || G.isZero(0.0)) return finish(A, G, MatrixXd::Zero(n, n));
  MatrixXd a_pinv = pseudo_inverse(A);
  MatrixXd f = a_pinv * G;
  MatrixXd proj = MatrixXd::Identity(n, n) - a_pinv * A;
  VectorXd w = proj * P;
  double ww = w.squaredNorm();
  if (ww > 1e-28 * P.squaredNorm() && P.squaredNorm() > 0.0) {
    VectorXd c = -(proj * (f.transpose() * P));
    f += (w / ww) * c.transpose();
  }
  return finish(A, G, std::move(f));
}

// ---------------------------------------------------------------------------

Observable::Observable(const System& sys, expr::Expr e) : n_(sys.n()), m_(sys.m()) {
  const auto& coords = sys.spec().coords;
  const int n = n_;
  const int m = m_;
  auto resolver = [&coords, n, m](const std::string& name) -> std::optional<int> {
    for (int i = 0; i < n; ++i) {
      if (name == coords[static_cast<std::size_t>(i)]) return i;
      if (name == momentum_name(coords[static_cast<std::size_t>(i)])) return n + i;
    }
    for (int k = 0; k < m; ++k) {
      if (name == multiplier_name(k)) return 2 * n + k;
      if (name == multiplier_momentum_name(k)) return 2 * n + m + k;
    }
    if (name == "t") return 2 * n + 2 * m;
    return std::nullopt;
  };
  tape_ = expr::Tape(e, resolver, sys.spec().params);
}

Observable::Observable(const System& sys, std::string_view source) : Observable(sys, expr::parse(source)) {}

VectorXd Observable::slots(const PhaseState& s) const {
  VectorXd x(2 * n_ + 2 * m_ + 1);
  x << s.q, s.p, s.lam, s.plam, s.t;
  return x;
}

double Observable::value(const PhaseState& s) const {
  VectorXd x = slots(s);
  return tape_.eval<double>(as_span<double>(x));
}

PhaseGradient Observable::gradient(const PhaseState& s) const {
  VectorXd x = slots(s);
  auto xs = as_span<double>(x);
  PhaseGradient g;
  g.dq.resize(n_);
  g.dp.resize(n_);
  g.dlam.resize(m_);
  g.dplam.resize(m_);
  for (int i = 0; i < n_; ++i) {
    g.dq(i) = tape_.partial<double>(xs, i);
    g.dp(i) = tape_.partial<double>(xs, n_ + i);
  }
  for (int k = 0; k < m_; ++k) {
    g.dlam(k) = tape_.partial<double>(xs, 2 * n_ + k);
    g.dplam(k) = tape_.partial<double>(xs, 2 * n_ + m_ + k);
  }
  g.dt = tape_.partial<double>(xs, 2 * n_ + 2 * m_);
  return g;
}

double poisson(const PhaseGradient& x, const PhaseGradient& y) {
  return x.dq.dot(y.dp) - x.dp.dot(y.dq) + x.dlam.dot(y.dplam) - x.dplam.dot(y.dlam);
}

double flannery(const PhaseGradient& x, const PhaseGradient& y, const VectorXd& p, const MatrixXd& f) {
  VectorXd pf = f.transpose() * p;  // (p_j f^j_i)_i
  return x.dq.dot(y.dp) - x.dp.dot(y.dq - pf) + x.dlam.dot(y.dplam) - x.dplam.dot(y.dlam);
}

double poisson(const Observable& x, const Observable& y, const PhaseState& s) {
  return poisson(x.gradient(s), y.gradient(s));
}

double flannery(const Observable& x, const Observable& y, const PhaseState& s, const TranspositionField& tf) {
  return flannery(x.gradient(s), y.gradient(s), s.p, tf.f);
}

}  // namespace cdyn
