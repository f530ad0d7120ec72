#include "cdyn/model.hpp"

#include <algorithm>
#include <set>

namespace cdyn {

std::string velocity_name(const std::string& coord) { return coord + "_dot"; }
std::string momentum_name(const std::string& coord) { return "p_" + coord; }
std::string multiplier_name(int k) { return "lam_" + std::to_string(k + 1); }
std::string multiplier_momentum_name(int k) { return "plam_" + std::to_string(k + 1); }

namespace {

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  auto start = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!start(s[0])) return false;
  return std::all_of(s.begin(), s.end(), [&](char c) { return start(c) || (c >= '0' && c <= '9'); });
}

bool reserved(const std::string& s) {
  if (s == "t" || s == "pi" || expr::func_from_name(s)) return true;
  auto prefixed = [&](const char* p) { return s.rfind(p, 0) == 0; };
  return prefixed("p_") || prefixed("lam_") || prefixed("plam_");
}

}  // namespace

System::System(SystemSpec spec) : spec_(std::move(spec)) {
  n_ = static_cast<int>(spec_.coords.size());
  m_ = static_cast<int>(spec_.constraints.size());
  if (n_ < 1) throw InvalidSystem("system needs at least one coordinate");
  if (m_ >= n_) throw InvalidSystem("constraint count must be smaller than coordinate count");
  if (spec_.lagrangian.empty()) throw InvalidSystem("missing lagrangian");

  std::set<std::string> names;
  for (const auto& c : spec_.coords) {
    if (!valid_identifier(c) || reserved(c) || c.ends_with("_dot")) {
      throw InvalidSystem("invalid coordinate name '" + c + "'");
    }
    if (!names.insert(c).second) throw InvalidSystem("duplicate coordinate '" + c + "'");
  }
  std::set<std::string> velocities;
  for (const auto& c : spec_.coords) {
    velocities.insert(velocity_name(c));
    names.insert(velocity_name(c));
  }
  for (const auto& [p, v] : spec_.params) {
    if (!valid_identifier(p) || reserved(p)) throw InvalidSystem("invalid parameter name '" + p + "'");
    if (!names.insert(p).second) throw InvalidSystem("parameter '" + p + "' shadows a coordinate");
  }
  names.insert("t");

  auto check_vars = [&](const expr::Expr& e, const std::string& what) {
    for (const auto& v : expr::free_vars(e)) {
      if (!names.count(v)) throw InvalidSystem(what + " references undeclared name '" + v + "'");
    }
  };
  check_vars(spec_.lagrangian, "lagrangian");
  for (int k = 0; k < m_; ++k) {
    if (spec_.constraints[static_cast<std::size_t>(k)].empty()) throw InvalidSystem("empty constraint");
    check_vars(spec_.constraints[static_cast<std::size_t>(k)], "constraint " + std::to_string(k + 1));
  }

  auto resolver = [this](const std::string& name) -> std::optional<int> {
    for (int i = 0; i < n_; ++i) {
      if (name == spec_.coords[static_cast<std::size_t>(i)]) return slot_q(i);
      if (name == velocity_name(spec_.coords[static_cast<std::size_t>(i)])) return slot_qd(i);
    }
    if (name == "t") return slot_t();
    for (int k = 0; k < m_; ++k) {
      if (name == multiplier_name(k)) return slot_lam(k);
    }
    return std::nullopt;
  };

  lagrangian_ = expr::Tape(spec_.lagrangian, resolver, spec_.params);
  expr::Expr adj = spec_.lagrangian;
  for (int k = 0; k < m_; ++k) {
    const auto& g = spec_.constraints[static_cast<std::size_t>(k)];
    adj = adj - expr::Expr::var(multiplier_name(k)) * g;
    constraints_.emplace_back(g, resolver, spec_.params);
    auto fv = expr::free_vars(g);
    velocity_dependent_.push_back(
        std::any_of(fv.begin(), fv.end(), [&](const std::string& v) { return velocities.count(v) != 0; }));
    if (expr::polynomial_degree(g, velocities) > 1) linear_in_velocity_ = false;
  }
  adjoined_ = expr::Tape(adj, resolver, spec_.params);
}

double adjoined_lagrangian(const System& sys, const ConfigState& cs, const VectorXd& lam) {
  VectorXd x = sys.slots(cs, lam);
  return sys.adjoined().eval<double>(as_span<double>(x));
}

VectorXd momenta(const System& sys, const ConfigState& cs, const VectorXd& lam) {
  VectorXd x = sys.slots(cs, lam);
  return momenta_t<double>(sys, x);
}

LegendreSolution legendre_solve(const System& sys, double t, const VectorXd& q, const VectorXd& p,
                                const VectorXd& lam, const VectorXd& guess) {
  constexpr int kMaxIterations = 50;
  constexpr double kTolerance = 1e-12;
  constexpr double kMaxCondition = 1e12;
  const int n = sys.n();
  LegendreSolution sol;
  sol.qd = guess.size() == n ? guess : VectorXd::Zero(n);
  if (!sol.qd.allFinite()) sol.qd.setZero();
  sol.hessian.resize(n, n);
  for (int it = 0; it <= kMaxIterations; ++it) {
    VectorXd x = sys.slots<double>(t, q, sol.qd, lam);
    auto xs = as_span<double>(x);
    VectorXd residual = momenta_t<double>(sys, x) - p;
    for (int i = 0; i < n; ++i) {
      for (int j = i; j < n; ++j) {
        sol.hessian(i, j) = sol.hessian(j, i) =
            sys.adjoined().second_partial<double>(xs, sys.slot_qd(i), sys.slot_qd(j));
      }
    }
    double cond = condition_number(sol.hessian);
    if (!(cond <= kMaxCondition)) {
      throw DegenerateLegendre("velocity Hessian is singular (condition estimate " +
                               std::to_string(cond) + ")");
    }
    if (residual.lpNorm<Eigen::Infinity>() < kTolerance) {
      sol.iterations = it;
      return sol;
    }
    if (it == kMaxIterations) break;
    sol.qd -= sol.hessian.partialPivLu().solve(residual);
    if (!sol.qd.allFinite()) break;
  }
  throw NoConvergence("Legendre inversion did not converge");
}

VectorXd legendre_invert(const System& sys, double t, const VectorXd& q, const VectorXd& p,
                         const VectorXd& lam, const VectorXd& guess) {
  return legendre_solve(sys, t, q, p, lam, guess).qd;
}

double hamiltonian(const System& sys, const PhaseState& s, const VectorXd& guess) {
  VectorXd qd = legendre_invert(sys, s.t, s.q, s.p, s.lam, guess);
  return qd.dot(s.p) - adjoined_lagrangian(sys, ConfigState{s.t, s.q, qd}, s.lam);
}

HamiltonianGradient grad_hamiltonian(const System& sys, const PhaseState& s, const VectorXd& guess) {
  VectorXd qd = legendre_invert(sys, s.t, s.q, s.p, s.lam, guess);
  VectorXd x = sys.slots<double>(s.t, s.q, qd, s.lam);
  auto xs = as_span<double>(x);
  HamiltonianGradient g;
  g.dq.resize(sys.n());
  for (int i = 0; i < sys.n(); ++i) g.dq(i) = -sys.adjoined().partial<double>(xs, sys.slot_q(i));
  g.dp = qd;
  g.dlam.resize(sys.m());
  for (int k = 0; k < sys.m(); ++k) g.dlam(k) = sys.constraint(k).eval<double>(xs);
  g.dt = -sys.adjoined().partial<double>(xs, sys.slot_t());
  return g;
}

double physical_energy(const System& sys, const ConfigState& cs) {
  VectorXd x = sys.slots(cs, VectorXd::Zero(sys.m()));
  auto xs = as_span<double>(x);
  double e = -sys.lagrangian().eval<double>(xs);
  for (int i = 0; i < sys.n(); ++i) e += cs.qd(i) * sys.lagrangian().partial<double>(xs, sys.slot_qd(i));
  return e;
}

VectorXd constraint_values(const System& sys, const ConfigState& cs) {
  VectorXd x = sys.slots(cs, VectorXd::Zero(sys.m()));
  VectorXd g(sys.m());
  for (int k = 0; k < sys.m(); ++k) g(k) = sys.constraint(k).eval<double>(as_span<double>(x));
  return g;
}

}  // namespace cdyn
