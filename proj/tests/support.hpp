#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cdyn/scenarios.hpp"

namespace testing {

using namespace cdyn;

struct Loaded {
  ScenarioConfig cfg;
  System sys;
};

inline Loaded load(const std::string& name) {
  ScenarioConfig cfg = builtin(name);
  System sys(cfg.spec);
  return {std::move(cfg), std::move(sys)};
}

inline System make_system(std::vector<std::string> coords, const std::string& lagrangian,
                          const std::vector<std::string>& constraints = {},
                          std::map<std::string, double> params = {}) {
  SystemSpec spec;
  spec.name = "test";
  spec.coords = std::move(coords);
  spec.params = std::move(params);
  spec.lagrangian = expr::parse(lagrangian);
  for (const auto& g : constraints) spec.constraints.push_back(expr::parse(g));
  return System(std::move(spec));
}

inline VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Seeded random expressions over x, y, z.
class ExprGen {
 public:
  explicit ExprGen(std::uint64_t seed) : rng_(seed) {}

  expr::Expr next(int depth = 4) {
    using expr::Expr;
    using expr::Kind;
    if (depth == 0 || pick(0, 3) == 0) return leaf();
    switch (pick(0, 7)) {
      case 0: return Expr::binary(Kind::Add, next(depth - 1), next(depth - 1));
      case 1: return Expr::binary(Kind::Sub, next(depth - 1), next(depth - 1));
      case 2: return Expr::binary(Kind::Mul, next(depth - 1), next(depth - 1));
      case 3: return Expr::binary(Kind::Div, next(depth - 1),
                                  Expr::binary(Kind::Add, Expr::number(2.0), Expr::call(expr::Func::Cos, next(depth - 1))));
      case 4: return Expr::binary(Kind::Pow, next(depth - 1), Expr::number(static_cast<double>(pick(2, 3))));
      case 5: return Expr::neg(next(depth - 1));
      case 6: {
        static const expr::Func fs[] = {expr::Func::Sin, expr::Func::Cos, expr::Func::Exp};
        Expr arg = next(depth - 1);
        if (fs[pick(0, 2)] == expr::Func::Exp) return Expr::call(expr::Func::Exp, Expr::call(expr::Func::Sin, arg));
        return Expr::call(fs[pick(0, 1)], arg);
      }
      default:
        return Expr::call(expr::Func::Sqrt, Expr::binary(Kind::Add, Expr::number(1.0),
                                                           Expr::binary(Kind::Pow, next(depth - 1), Expr::number(2.0))));
    }
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  expr::Expr leaf() {
    static const char* names[] = {"x", "y", "z"};
    switch (pick(0, 4)) {
      case 0: return expr::Expr::number(std::round(uniform(0.0, 3.0) * 4.0) / 4.0);
      case 1: return expr::Expr::pi();
      default: return expr::Expr::var(names[pick(0, 2)]);
    }
  }

  std::mt19937_64 rng_;
};

}  // namespace testing
