#include "cdyn/scenarios.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace cdyn {

using nlohmann::json;

namespace {

ScenarioConfig make(std::string name, std::vector<std::string> coords, std::map<std::string, double> params,
                    std::string_view lagrangian, const std::vector<std::string_view>& constraints,
                    std::map<std::string, double> initial) {
  ScenarioConfig cfg;
  cfg.spec.name = std::move(name);
  cfg.spec.coords = std::move(coords);
  cfg.spec.params = std::move(params);
  cfg.spec.lagrangian = expr::parse(lagrangian);
  for (auto c : constraints) cfg.spec.constraints.push_back(expr::parse(c));
  cfg.initial = std::move(initial);
  return cfg;
}

ScenarioConfig rolling_sphere() {
  // z-x-z Euler angles; body rates
  //   wx = theta_dot cos(phi) + psi_dot sin(theta) sin(phi)
  //   wy = theta_dot sin(phi) - psi_dot sin(theta) cos(phi)
  //   wz = phi_dot + psi_dot cos(theta)
  const std::string wx = "(theta_dot*cos(phi) + psi_dot*sin(theta)*sin(phi))";
  const std::string wy = "(theta_dot*sin(phi) - psi_dot*sin(theta)*cos(phi))";
  const std::string wz = "(phi_dot + psi_dot*cos(theta))";
  const std::string lag = "0.5*M*(x_dot^2 + y_dot^2) + 0.5*(0.4*M*r^2)*(" + wx + "^2 + " + wy + "^2 + " + wz +
                          "^2) + M*g_e*sin(alpha)*x";
  const std::string g1 = "x_dot - r*" + wy;
  const std::string g2 = "y_dot + r*" + wx;
  return make("rolling-sphere", {"x", "y", "theta", "phi", "psi"},
              {{"M", 1.0}, {"r", 1.0}, {"g_e", 9.8}, {"alpha", std::numbers::pi / 6}}, lag, {g1, g2},
              {{"x", 0.0},
               {"y", 0.0},
               {"theta", std::numbers::pi / 2},
               {"phi", 0.0},
               {"psi", 0.0},
               {"x_dot", 0.0},
               {"y_dot", 0.0},
               {"theta_dot", 0.0},
               {"phi_dot", 2.5},
               {"psi_dot", 0.0}});
}

ScenarioConfig rod_pendulum() {
  const double th0 = std::numbers::pi / 4;
  return make("rod-pendulum", {"x", "y"}, {{"m", 1.0}, {"l", 1.0}, {"g_e", 9.8}},
              "0.5*m*(x_dot^2 + y_dot^2) - m*g_e*y", {"x^2 + y^2 - l^2"},
              {{"x", std::sin(th0)}, {"y", -std::cos(th0)}, {"x_dot", 0.0}, {"y_dot", 0.0}});
}

ScenarioConfig free_particle() {
  return make("free-particle", {"x"}, {}, "0.5*x_dot^2", {}, {{"x", 0.0}, {"x_dot", 3.0}});
}

ScenarioConfig constant_velocity() {
  return make("constant-velocity", {"x", "y"}, {{"c", 3.0}}, "0.5*(x_dot^2 + y_dot^2)", {"x_dot - c"},
              {{"x", 0.0}, {"y", 0.0}, {"x_dot", 3.0}, {"y_dot", 0.5}});
}

ScenarioConfig twist_toy() {
  return make("twist-toy", {"x", "y", "z"}, {}, "0.5*(x_dot^2 + y_dot^2 + z_dot^2)", {"y_dot - z*x_dot"},
              {{"x", 0.0}, {"y", 0.0}, {"z", 0.5}, {"x_dot", 1.0}, {"y_dot", 0.5}, {"z_dot", 0.2}});
}

std::string escape_pointer(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

const json& require(const json& obj, const std::string& key, json::value_t type, const char* type_name) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError("/" + key, "missing required key");
  bool ok = it->type() == type ||
            (type == json::value_t::number_float && it->is_number());
  if (!ok) throw SchemaError("/" + key, std::string("expected ") + type_name);
  return *it;
}

expr::Expr parse_expr(const json& j, const std::string& pointer) {
  if (!j.is_string()) throw SchemaError(pointer, "expected string");
  try {
    return expr::parse(j.get<std::string>());
  } catch (const ParseError& e) {
    throw ParseError(e.offset(), e.expected(), pointer + ": " + e.what());
  }
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"rolling-sphere", "rod-pendulum", "free-particle",
                                                 "constant-velocity", "twist-toy"};
  return names;
}

ScenarioConfig builtin(std::string_view name) {
  if (name == "rolling-sphere") return rolling_sphere();
  if (name == "rod-pendulum") return rod_pendulum();
  if (name == "free-particle") return free_particle();
  if (name == "constant-velocity") return constant_velocity();
  if (name == "twist-toy") return twist_toy();
  throw UnknownScenario(std::string(name));
}

ScenarioConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw SchemaError("", "expected object");

  ScenarioConfig cfg;
  cfg.spec.name = require(root, "name", json::value_t::string, "string").get<std::string>();
  const json& coords = require(root, "coordinates", json::value_t::array, "array");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!coords[i].is_string()) throw SchemaError("/coordinates/" + std::to_string(i), "expected string");
    cfg.spec.coords.push_back(coords[i].get<std::string>());
  }
  if (root.contains("parameters")) {
    const json& params = require(root, "parameters", json::value_t::object, "object");
    for (const auto& [k, v] : params.items()) {
      if (!v.is_number()) throw SchemaError("/parameters/" + escape_pointer(k), "expected number");
      cfg.spec.params[k] = v.get<double>();
    }
  }
  require(root, "lagrangian", json::value_t::string, "string");
  cfg.spec.lagrangian = parse_expr(root["lagrangian"], "/lagrangian");
  if (root.contains("constraints")) {
    const json& cons = require(root, "constraints", json::value_t::array, "array");
    for (std::size_t i = 0; i < cons.size(); ++i) {
      cfg.spec.constraints.push_back(parse_expr(cons[i], "/constraints/" + std::to_string(i)));
    }
  }
  const json& init = require(root, "initial", json::value_t::object, "object");
  for (const auto& [k, v] : init.items()) {
    if (!v.is_number()) throw SchemaError("/initial/" + escape_pointer(k), "expected number");
    cfg.initial[k] = v.get<double>();
  }
  for (const auto& c : cfg.spec.coords) {
    for (const auto& key : {c, velocity_name(c)}) {
      if (!cfg.initial.count(key)) throw SchemaError("/initial/" + escape_pointer(key), "missing initial value");
    }
  }
  for (const auto& [k, v] : cfg.initial) {
    bool known = false;
    for (const auto& c : cfg.spec.coords) known = known || k == c || k == velocity_name(c);
    if (!known) throw SchemaError("/initial/" + escape_pointer(k), "not a coordinate or velocity");
  }
  if (root.contains("outputs")) {
    const json& outs = require(root, "outputs", json::value_t::array, "array");
    for (std::size_t i = 0; i < outs.size(); ++i) {
      parse_expr(outs[i], "/outputs/" + std::to_string(i));
      cfg.outputs.push_back(outs[i].get<std::string>());
    }
  }
  System sys(cfg.spec);
  check_initial(sys, cfg);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

ScenarioConfig resolve_scenario(const std::string& name_or_path) {
  for (const auto& n : builtin_names()) {
    if (n == name_or_path) return builtin(n);
  }
  if (name_or_path.ends_with(".json")) return load_config(name_or_path);
  throw UnknownScenario(name_or_path);
}

std::string to_json(const ScenarioConfig& cfg) {
  json j;
  j["name"] = cfg.spec.name;
  j["coordinates"] = cfg.spec.coords;
  j["parameters"] = json::object();
  for (const auto& [k, v] : cfg.spec.params) j["parameters"][k] = v;
  j["lagrangian"] = expr::to_string(cfg.spec.lagrangian);
  j["constraints"] = json::array();
  for (const auto& g : cfg.spec.constraints) j["constraints"].push_back(expr::to_string(g));
  j["initial"] = json::object();
  for (const auto& [k, v] : cfg.initial) j["initial"][k] = v;
  if (!cfg.outputs.empty()) j["outputs"] = cfg.outputs;
  return j.dump(2) + "\n";
}

ConfigState initial_config(const ScenarioConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(cfg.spec.coords.size());
  ConfigState cs{0.0, VectorXd(n), VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = cfg.spec.coords[static_cast<std::size_t>(i)];
    auto q = cfg.initial.find(c);
    auto v = cfg.initial.find(velocity_name(c));
    if (q == cfg.initial.end() || v == cfg.initial.end()) {
      throw SchemaError("/initial/" + escape_pointer(q == cfg.initial.end() ? c : velocity_name(c)),
                        "missing initial value");
    }
    cs.q(i) = q->second;
    cs.qd(i) = v->second;
  }
  return cs;
}

void check_initial(const System& sys, const ScenarioConfig& cfg, double tol) {
  ConfigState cs = initial_config(cfg);
  VectorXd x = sys.slots(cs, VectorXd::Zero(sys.m()));
  auto xs = as_span<double>(x);
  VectorXd v = VectorXd::Zero(sys.slot_count());
  for (int i = 0; i < sys.n(); ++i) v(sys.slot_q(i)) = cs.qd(i);
  v(sys.slot_t()) = 1.0;
  for (int k = 0; k < sys.m(); ++k) {
    double g = sys.constraint(k).eval<double>(xs);
    if (!(std::abs(g) <= tol)) {
      throw ConstraintViolated("initial state violates constraint " + std::to_string(k + 1) +
                               " (g = " + std::to_string(g) + ")");
    }
    if (!sys.velocity_dependent(k)) {
      double gd = sys.constraint(k).directional<double>(xs, as_span<double>(v));
      if (!(std::abs(gd) <= tol)) {
        throw ConstraintViolated("initial velocities violate the derivative of constraint " +
                                 std::to_string(k + 1) + " (dg/dt = " + std::to_string(gd) + ")");
      }
    }
  }
}

PhaseState initial_phase_state(const System& sys, const ScenarioConfig& cfg, Method method) {
  check_initial(sys, cfg);
  ConfigState cs = initial_config(cfg);
  PhaseState s;
  s.t = cs.t;
  s.q = cs.q;
  s.lam = VectorXd::Zero(sys.m());
  s.plam = VectorXd::Zero(sys.m());
  s.p = momenta(sys, cs, s.lam);
  ConsistencyReport rep = solve_multipliers(sys, s.t, s.q, s.p, method, s.lam, cs.qd);
  VectorXd qd = legendre_invert(sys, s.t, s.q, s.p, rep.lam, cs.qd);
  double err = (qd - cs.qd).lpNorm<Eigen::Infinity>();
  if (!(err <= 1e-10)) {
    throw ConstraintViolated("initial velocities are inconsistent with the solved multipliers (error " +
                             std::to_string(err) + ")");
  }
  s.lam = rep.lam;
  return s;
}

}  // namespace cdyn
