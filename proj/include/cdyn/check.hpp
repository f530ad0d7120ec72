#pragma once

// Cross-module invariant suite and the seeded state sampler it shares with
// the test programs.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cdyn/scenarios.hpp"

namespace cdyn {

/// Seeded random states around a scenario's initial configuration.
class StateSampler {
 public:
  StateSampler(const System& sys, const ScenarioConfig& cfg, std::uint64_t seed);

  /// Arbitrary point of extended phase space.
  PhaseState extended();
  /// Arbitrary (q, q_dot), not necessarily on the constraint surface.
  ConfigState configuration();
  /// (q, q_dot) with g = 0 and, for holonomic g, dg/dt = 0.
  ConfigState on_surface_config();
  /// Consistent phase state: p = dL/dq_dot at lam = 0, then lam solved.
  PhaseState on_surface(Method method);

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

 private:
  const System* sys_;
  ConfigState base_;
  std::mt19937_64 rng_;
};

struct InvariantResult {
  std::string module;
  std::string name;
  bool passed{false};
  double value{0.0};  // worst observed error
  double bound{0.0};
  std::string detail;
};

struct CheckOptions {
  std::string filter;  // module name or invariant name; empty runs everything
  std::uint64_t seed{20240611};
  int states{20};      // random states per scenario
};

std::vector<InvariantResult> run_invariants(const CheckOptions& opts);

/// Names of every invariant as "module/name".
std::vector<std::string> invariant_names();

}  // namespace cdyn
