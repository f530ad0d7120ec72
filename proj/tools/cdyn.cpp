// cdyn: run scenarios, compare methods, and run the invariant suite.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "cdyn/check.hpp"
#include "cdyn/integrate.hpp"

using nlohmann::ordered_json;
using namespace cdyn;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kDrift = 3 };

struct RunSettings {
  std::string scenario;
  std::string method{"flannery"};
  double t_end{2.0};
  double dt{0.0};
  bool adaptive{false};
  double tol{1e-10};
  int samples{400};
  std::string stabilize{"none"};
  std::string out;
  std::string observables;
  double drift_abort{std::numeric_limits<double>::infinity()};
  long max_steps{1'000'000};
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  std::vector<std::string> kept;
  for (auto& x : out) {
    auto b = x.find_first_not_of(' ');
    auto e = x.find_last_not_of(' ');
    if (b != std::string::npos) kept.push_back(x.substr(b, e - b + 1));
  }
  return kept;
}

IntegratorOpts integrator_opts(const RunSettings& rs) {
  IntegratorOpts o;
  if (rs.dt > 0.0 && !rs.adaptive) {
    o.scheme = Scheme::rk4;
    o.dt = rs.dt;
  } else {
    o.scheme = Scheme::dp45;
    o.rel_tol = o.abs_tol = rs.tol;
  }
  o.max_steps = rs.max_steps;
  o.drift_abort = rs.drift_abort;
  auto st = stabilization_from_string(rs.stabilize);
  if (!st) throw CLI::ValidationError("--stabilize", "expected none or projection");
  o.stabilization = *st;
  return o;
}

/// One integrated run laid out as CSV rows.
struct RunResult {
  std::string method;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  std::vector<VectorXd> q;
  double max_g{0.0};
  double max_plam{0.0};
  double energy_drift{0.0};
  long accepted{0};
  long rejected{0};
  double wall{0.0};
  PhaseState final_state;
};

RunResult execute(const ScenarioConfig& cfg, const std::string& method, const RunSettings& rs) {
  System sys(cfg.spec);
  const int n = sys.n();
  const int m = sys.m();
  IntegratorOpts opts = integrator_opts(rs);
  if (!(rs.t_end > 0.0)) throw CLI::ValidationError("--t-end", "must be positive");
  if (rs.samples < 2) throw CLI::ValidationError("--samples", "must be at least 2");
  std::vector<double> ts = uniform_samples(0.0, rs.t_end, rs.samples);

  std::vector<std::string> obs_src = cfg.outputs;
  for (const auto& e : split(rs.observables, ';')) obs_src.push_back(e);
  std::vector<Observable> obs;
  for (const auto& e : obs_src) obs.emplace_back(sys, e);

  RunResult res;
  res.method = method;
  res.header.push_back("t");
  for (const auto& c : cfg.spec.coords) res.header.push_back("q:" + c);
  for (const auto& c : cfg.spec.coords) res.header.push_back("p:" + c);
  for (int k = 0; k < m; ++k) res.header.push_back("lam:" + std::to_string(k + 1));
  for (int k = 0; k < m; ++k) res.header.push_back("g:" + std::to_string(k + 1));
  res.header.push_back("energy");
  res.header.push_back("H");
  for (const auto& e : obs_src) res.header.push_back("obs:" + e);

  auto start = std::chrono::steady_clock::now();
  std::vector<PhaseState> states;
  std::vector<VectorXd> gs;
  std::vector<double> energy, ham;
  if (method == "oracle") {
    ConfigState c0 = initial_config(cfg);
    check_initial(sys, cfg);
    OracleTrajectory tr = integrate_oracle(sys, c0, rs.t_end, opts, ts);
    res.accepted = tr.accepted;
    res.rejected = tr.rejected;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      const ConfigState& cs = tr.states[i];
      PhaseState s{cs.t, cs.q, momenta(sys, cs, VectorXd::Zero(m)), tr.diag[i].mu, VectorXd::Zero(m)};
      states.push_back(s);
      gs.push_back(tr.diag[i].g);
      energy.push_back(tr.diag[i].energy);
      ham.push_back(tr.diag[i].energy);
    }
  } else {
    auto meth = method_from_string(method);
    if (!meth) throw CLI::ValidationError("--method", "expected oracle, dirac or flannery");
    PhaseState s0 = initial_phase_state(sys, cfg, *meth);
    Trajectory tr = integrate_phase(sys, s0, rs.t_end, *meth, opts, ts);
    res.accepted = tr.accepted;
    res.rejected = tr.rejected;
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      states.push_back(tr.states[i]);
      gs.push_back(tr.diag[i].g);
      energy.push_back(tr.diag[i].energy);
      ham.push_back(tr.diag[i].hamiltonian);
      res.max_plam = std::max(res.max_plam, m ? tr.states[i].plam.lpNorm<Eigen::Infinity>() : 0.0);
    }
  }
  res.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  for (std::size_t i = 0; i < states.size(); ++i) {
    const PhaseState& s = states[i];
    std::vector<double> row;
    row.push_back(s.t);
    for (int j = 0; j < n; ++j) row.push_back(s.q(j));
    for (int j = 0; j < n; ++j) row.push_back(s.p(j));
    for (int k = 0; k < m; ++k) row.push_back(s.lam(k));
    for (int k = 0; k < m; ++k) row.push_back(gs[i](k));
    row.push_back(energy[i]);
    row.push_back(ham[i]);
    for (const auto& x : obs) row.push_back(x.value(s));
    res.rows.push_back(std::move(row));
    res.times.push_back(s.t);
    res.q.push_back(s.q);
    if (m) res.max_g = std::max(res.max_g, gs[i].lpNorm<Eigen::Infinity>());
    res.energy_drift = std::max(res.energy_drift, std::abs(energy[i] - energy[0]) / std::max(1.0, std::abs(energy[0])));
  }
  res.final_state = states.back();
  return res;
}

void write_csv(const RunResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < r.header.size(); ++i) out << (i ? "," : "") << r.header[i];
  out << '\n';
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt(row[i]);
    out << '\n';
  }
}

ordered_json report_json(const ScenarioConfig& cfg, const RunSettings& rs, const RunResult& r) {
  IntegratorOpts o = integrator_opts(rs);
  ordered_json j;
  j["scenario"] = cfg.spec.name;
  j["method"] = r.method;
  j["integrator"] = {{"scheme", std::string(to_string(o.scheme))},
                     {"dt", o.scheme == Scheme::rk4 ? ordered_json(o.dt) : ordered_json(nullptr)},
                     {"rel_tol", o.scheme == Scheme::dp45 ? ordered_json(o.rel_tol) : ordered_json(nullptr)},
                     {"abs_tol", o.scheme == Scheme::dp45 ? ordered_json(o.abs_tol) : ordered_json(nullptr)},
                     {"max_steps", o.max_steps},
                     {"drift_abort", std::isfinite(o.drift_abort) ? ordered_json(o.drift_abort) : ordered_json(nullptr)},
                     {"stabilization", std::string(to_string(o.stabilization))}};
  j["wall_time_s"] = r.wall;
  ordered_json fs;
  fs["t"] = r.final_state.t;
  for (std::size_t i = 0; i < cfg.spec.coords.size(); ++i) {
    fs["q"][cfg.spec.coords[i]] = r.final_state.q(static_cast<Eigen::Index>(i));
    fs["p"][cfg.spec.coords[i]] = r.final_state.p(static_cast<Eigen::Index>(i));
  }
  fs["lam"] = ordered_json::array();
  for (Eigen::Index k = 0; k < r.final_state.lam.size(); ++k) fs["lam"].push_back(r.final_state.lam(k));
  j["final_state"] = fs;
  j["max_constraint_residual"] = r.max_g;
  j["max_abs_plam"] = r.max_plam;
  j["energy_drift"] = r.energy_drift;
  j["steps"] = {{"accepted", r.accepted}, {"rejected", r.rejected}};
  j["samples"] = r.rows.size();
  return j;
}

int fail(int code, const std::string& what) {
  std::cerr << "cdyn: " << what << "\n";
  return code;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const CLI::Error& e) {
    return fail(kUsage, e.what());
  } catch (const UnknownScenario& e) {
    return fail(kUsage, e.what());
  } catch (const DriftAbort& e) {
    return fail(kDrift, e.what());
  } catch (const NumericalError& e) {
    return fail(kNumerical, std::string("numerical failure: ") + e.what());
  } catch (const DomainError& e) {
    return fail(kNumerical, std::string("numerical failure: ") + e.what());
  } catch (const Error& e) {
    return fail(kUsage, e.what());
  } catch (const std::exception& e) {
    return fail(kUsage, e.what());
  }
}

void add_run_flags(CLI::App* app, RunSettings& rs) {
  app->add_option("--scenario", rs.scenario, "Builtin name or path to a .json scenario")->required();
  app->add_option("--t-end", rs.t_end, "End time in seconds");
  app->add_option("--dt", rs.dt, "Fixed RK4 step in seconds");
  app->add_flag("--adaptive", rs.adaptive, "Use Dormand-Prince 5(4) (default unless --dt is given)");
  app->add_option("--tol", rs.tol, "Relative and absolute tolerance for --adaptive");
  app->add_option("--samples", rs.samples, "Number of output samples");
  app->add_option("--stabilize", rs.stabilize, "none or projection");
  app->add_option("--observables", rs.observables, "Extra CSV columns: \"<expr>;<expr>\"");
  app->add_option("--drift-abort", rs.drift_abort, "Abort when max|g| exceeds this value");
  app->add_option("--max-steps", rs.max_steps, "Step budget");
}

double max_diff(const RunResult& a, const RunResult& b, Eigen::Index i) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.q.size(); ++k) d = std::max(d, std::abs(a.q[k](i) - b.q[k](i)));
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained dynamics by Dirac's method and its Flannery extension"};
  app.require_subcommand(1);

  RunSettings run;
  CLI::App* run_cmd = app.add_subcommand("run", "Integrate one scenario and write CSV");
  add_run_flags(run_cmd, run);
  run_cmd->add_option("--method", run.method, "oracle, dirac or flannery");
  run_cmd->add_option("--out", run.out, "CSV output path")->required();

  RunSettings cmp;
  std::string methods = "oracle,dirac,flannery";
  std::string cmp_out;
  CLI::App* cmp_cmd = app.add_subcommand("compare", "Run several methods on one sample grid");
  add_run_flags(cmp_cmd, cmp);
  cmp_cmd->add_option("--methods", methods, "Comma-separated methods (at least two)");
  cmp_cmd->add_option("--out", cmp_out, "Also write the JSON report to this path");

  CheckOptions chk;
  std::string fault;
  CLI::App* chk_cmd = app.add_subcommand("check", "Run the invariant suite");
  chk_cmd->add_option("--filter", chk.filter, "Module or invariant name");
  chk_cmd->add_option("--seed", chk.seed, "Sampler seed");
  chk_cmd->add_option("--inject-fault", fault, "Seed a fault (solve_f) to exercise the harness");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*run_cmd) {
    return guarded([&] {
      ScenarioConfig cfg = resolve_scenario(run.scenario);
      RunResult r = execute(cfg, run.method, run);
      write_csv(r, run.out);
      ordered_json j = report_json(cfg, run, r);
      j["out"] = run.out;
      std::cout << j.dump(2) << "\n";
      return int{kOk};
    });
  }

  if (*cmp_cmd) {
    return guarded([&] {
      std::vector<std::string> names = split(methods, ',');
      if (names.size() < 2) throw CLI::ValidationError("--methods", "name at least two methods");
      ScenarioConfig cfg = resolve_scenario(cmp.scenario);
      std::vector<RunResult> results(names.size());
      std::vector<std::exception_ptr> errors(names.size());
      std::vector<std::thread> workers;
      for (std::size_t i = 0; i < names.size(); ++i) {
        workers.emplace_back([&, i] {
          try {
            results[i] = execute(cfg, names[i], cmp);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
      ordered_json j;
      j["scenario"] = cfg.spec.name;
      j["methods"] = names;
      j["samples"] = results[0].rows.size();
      j["runs"] = ordered_json::array();
      for (const auto& r : results) j["runs"].push_back(report_json(cfg, cmp, r));
      j["pairs"] = ordered_json::array();
      for (std::size_t a = 0; a < names.size(); ++a) {
        for (std::size_t b = a + 1; b < names.size(); ++b) {
          ordered_json pj;
          pj["a"] = names[a];
          pj["b"] = names[b];
          double overall = 0.0;
          for (std::size_t i = 0; i < cfg.spec.coords.size(); ++i) {
            auto idx = static_cast<Eigen::Index>(i);
            double mx = max_diff(results[a], results[b], idx);
            overall = std::max(overall, mx);
            pj["max_abs"][cfg.spec.coords[i]] = mx;
            pj["final"][cfg.spec.coords[i]] = std::abs(results[a].q.back()(idx) - results[b].q.back()(idx));
          }
          pj["max_abs_overall"] = overall;
          j["pairs"].push_back(pj);
        }
      }
      std::string text = j.dump(2) + "\n";
      std::cout << text;
      if (!cmp_out.empty()) std::ofstream(cmp_out, std::ios::binary) << text;
      return int{kOk};
    });
  }

  if (*chk_cmd) {
    if (!fault.empty()) {
      if (fault != "solve_f") return fail(kUsage, "unknown fault '" + fault + "'");
      inject_solve_f_fault(1e-3);
    }
    if (!chk.filter.empty()) {
      bool known = false;
      for (const auto& name : invariant_names()) {
        auto slash = name.find('/');
        known = known || name.substr(0, slash) == chk.filter || name.substr(slash + 1) == chk.filter;
      }
      if (!known) return fail(kUsage, "no invariant matches filter '" + chk.filter + "'");
    }
    int failed = 0;
    for (const auto& r : run_invariants(chk)) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.module << "/" << r.name << "  " << r.detail << "\n";
      failed += r.passed ? 0 : 1;
    }
    if (failed) {
      std::cout << failed << " invariant(s) failed\n";
      return kNumerical;
    }
    std::cout << "all invariants passed\n";
    return kOk;
  }
  return kUsage;
}
