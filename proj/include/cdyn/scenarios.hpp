#pragma once

// Built-in scenarios and JSON scenario files.
//
// File format (UTF-8 JSON, SI units):
//   {"name": "...", "coordinates": ["x", ...], "parameters": {"m": 1.0, ...},
//    "lagrangian": "...", "constraints": ["...", ...],
//    "initial": {"x": 0.0, "x_dot": 3.0, ...}, "outputs": ["..."]}
// "outputs" is optional; every coordinate and its "_dot" velocity must be
// initialized.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cdyn/dynamics.hpp"

namespace cdyn {

struct ScenarioConfig {
  SystemSpec spec;
  std::map<std::string, double> initial;  // coordinate and <coord>_dot values at t = 0
  std::vector<std::string> outputs;       // observable expressions
};

const std::vector<std::string>& builtin_names();

/// Throws UnknownScenario.
ScenarioConfig builtin(std::string_view name);

/// Throws SchemaError (with JSON pointer), ParseError, InvalidSystem or ConstraintViolated.
ScenarioConfig load_config(const std::string& path);
ScenarioConfig parse_config(std::string_view json_text);

/// Builtin name, or a path to a .json file.
ScenarioConfig resolve_scenario(const std::string& name_or_path);

/// Pretty-printed JSON in the file format above.
std::string to_json(const ScenarioConfig& cfg);

ConfigState initial_config(const ScenarioConfig& cfg);

/// Throws ConstraintViolated when some |g_k| (or |dg_k/dt| for holonomic
/// g_k) exceeds `tol` at the initial configuration.
void check_initial(const System& sys, const ScenarioConfig& cfg, double tol = 1e-10);

/// p0 = dL/dq_dot at lam = 0, p_lam = 0. The multipliers are then solved and
/// must reproduce the initial velocities within 1e-10 (ConstraintViolated
/// otherwise); the returned state carries the solved lam.
PhaseState initial_phase_state(const System& sys, const ScenarioConfig& cfg, Method method = Method::flannery);

}  // namespace cdyn
