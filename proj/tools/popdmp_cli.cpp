// popdmp: solve, simulate and check the filtered MDP of a POPDMP from a config file.

#include "popdmp/config.hpp"
#include "popdmp/csv.hpp"
#include "popdmp/error.hpp"
#include "popdmp/sim.hpp"
#include "popdmp/solver.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using namespace popdmp;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::size_t> grid_k;
  std::optional<double> tol;
  std::string sigma;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration (default: built-in example)");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "master seed for simulation");
  cmd->add_option("--workers", o.workers, "OpenMP threads (0: runtime default)");
  cmd->add_option("--grid-k", o.grid_k, "simplex grid subdivisions K");
  cmd->add_option("--tol", o.tol, "value iteration tolerance");
  cmd->add_option("--sigma", o.sigma, "regularization bandwidth, or \"plain\"");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg = o.config.empty() ? default_config() : load_config(o.config);
  if (!o.out.empty()) cfg.output = o.out;
  if (o.seed) cfg.sim.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.grid_k) cfg.solver.grid_k = *o.grid_k;
  if (o.tol) cfg.solver.tol = *o.tol;
  if (o.sigma == "plain") {
    cfg.solver.sigma.reset();
  } else if (!o.sigma.empty()) {
    try {
      cfg.solver.sigma = std::stod(o.sigma);
    } catch (const std::exception&) {
      throw ConfigError("--sigma: expected a number or \"plain\"");
    }
  }
  validate(cfg);
  if (cfg.workers > 0) omp_set_num_threads(cfg.workers);
  fs::create_directories(cfg.output);
  std::ofstream(fs::path(cfg.output) / "resolved_config.json") << resolved_config_text(cfg);
  return cfg;
}

std::string path_in(const RunConfig& cfg, const char* name) { return (fs::path(cfg.output) / name).string(); }

// Everything needed to evaluate T on the grid; members reference each other.
struct Problem {
  PopdmpModel model;
  std::unique_ptr<BeliefOperator> op;
  std::shared_ptr<const SimplexGrid> grid;
  std::unique_ptr<CompiledOperator> compiled;

  explicit Problem(const RunConfig& cfg) : model(build_model(cfg.model)) {
    auto quad = build_quadrature(cfg, model);
    op = std::make_unique<BeliefOperator>(model, build_family(cfg.solver.family), quad, build_kernel(cfg.solver),
                                          cfg.solver.tie_tol);
    grid = std::make_shared<SimplexGrid>(model.num_states(), cfg.solver.grid_k);
    compiled = std::make_unique<CompiledOperator>(*op, grid);
  }
};

std::vector<std::string> belief_header(std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t j = 1; j <= d; ++j) h.push_back("rho" + std::to_string(j));
  return h;
}

SolveResult solve_and_write(const RunConfig& cfg, const Problem& p) {
  SolveResult res = value_iteration(*p.compiled, {cfg.solver.tol, cfg.solver.max_iter});
  const std::size_t d = p.grid->dim();
  const auto& family = p.op->family();

  CsvWriter value(path_in(cfg, "value.csv"));
  auto h = belief_header(d);
  h.insert(h.end(), {"value", "argmin"});
  value.header(h);
  CsvWriter policy(path_in(cfg, "policy.csv"));
  h = belief_header(d);
  h.insert(h.end(), {"argmin", "control"});
  policy.header(h);
  for (std::size_t i = 0; i < p.grid->size(); ++i) {
    auto pt = p.grid->point(i);
    const auto k = res.values.argmins[i];
    for (double r : pt) value << r;
    value << res.values.values[i] << static_cast<long long>(k);
    value.end_row();
    for (double r : pt) policy << r;
    policy << static_cast<long long>(k) << describe(family.candidates[static_cast<std::size_t>(k)]);
    policy.end_row();
  }

  CsvWriter report(path_in(cfg, "report.csv"));
  report.header({"iteration", "residual"});
  for (std::size_t i = 0; i < res.report.residuals.size(); ++i) {
    report << static_cast<long long>(i + 1) << res.report.residuals[i];
    report.end_row();
  }
  std::cout << "value iteration: " << res.report.iterations << " iterations, final residual "
            << format_number(res.report.final_residual) << (res.report.converged ? "" : " (not converged)")
            << ", " << format_number(res.report.wall_seconds) << " s\n";
  return res;
}

int cmd_solve(const Overrides& o) {
  RunConfig cfg = resolve(o);
  Problem p(cfg);
  return solve_and_write(cfg, p).report.converged ? 0 : 2;
}

SimOptions sim_options(const RunConfig& cfg, const Problem& p) {
  SimOptions sim;
  sim.horizon = cfg.sim.horizon;
  sim.step = cfg.sim.step;
  sim.kernel = p.op->kernel();
  return sim;
}

int cmd_simulate(const Overrides& o) {
  RunConfig cfg = resolve(o);
  Problem p(cfg);
  SolveResult res = solve_and_write(cfg, p);
  StationaryPolicy policy = extract_policy(res.values, p.op->family());
  BeliefPolicy bp = as_belief_policy(policy);
  SimOptions sim = sim_options(cfg, p);

  CsvWriter eval(path_in(cfg, "evaluation.csv"));
  eval.header({"x0", "mc_mean", "mc_stderr", "n_traj", "truncated", "value"});
  CsvWriter log(path_in(cfg, "trajectories.csv"));
  log.header({"x0", "traj", "n", "T_n", "Y_n", "X_n", "segment_cost"});
  for (double x : cfg.sim.x0) {
    Point x0 = scalar_point(x);
    McEstimate mc = evaluate_policy_mc(p.model, x0, bp, cfg.sim.n_traj, cfg.sim.seed, sim);
    eval << x << mc.mean << mc.std_error << static_cast<long long>(mc.n) << static_cast<long long>(mc.truncated)
         << interpolate(res.values, Belief(p.model.initial_belief(x0)));
    eval.end_row();
    const std::size_t logged = std::min<std::size_t>(cfg.sim.n_traj, 10);
    for (std::size_t t = 0; t < logged; ++t) {
      RngStream rng(cfg.sim.seed, t);
      Trajectory traj = simulate_trajectory(p.model, x0, bp, rng, sim);
      for (std::size_t n = 0; n < traj.times.size(); ++n) {
        log << x << static_cast<long long>(t) << static_cast<long long>(n) << traj.times[n]
            << p.model.post_jump_states[traj.states[n]][0] << traj.observations[n][0] << traj.segment_costs[n];
        log.end_row();
      }
    }
    std::cout << "x0 = " << format_number(x) << ": mean cost " << format_number(mc.mean) << " +- "
              << format_number(mc.std_error) << "\n";
  }
  return 0;
}

int cmd_filter(const Overrides& o) {
  RunConfig cfg = resolve(o);
  if (cfg.filter.events.empty()) throw ConfigError("filter.events: path to an event CSV is required");
  PopdmpModel model = build_model(cfg.model);
  std::ifstream in(cfg.filter.events);
  if (!in) throw ConfigError(cfg.filter.events + ": cannot open event file");
  std::vector<FilterEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (lineno == 1 && cells.size() == 3 && cells[0] == "r_piece_spec") continue;
    const std::string where = cfg.filter.events + ":" + std::to_string(lineno);
    if (cells.size() != 3) throw ConfigError(where + ": expected columns r_piece_spec,s,x");
    try {
      events.push_back({parse_control(cells[0]), std::stod(cells[1]), scalar_point(std::stod(cells[2]))});
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    } catch (const std::exception&) {
      throw ConfigError(where + ": s and x must be numbers");
    }
  }
  auto beliefs = filter_trajectory(model, scalar_point(cfg.filter.x0), events, build_kernel(cfg.solver));
  CsvWriter out(path_in(cfg, "beliefs.csv"));
  auto h = belief_header(model.num_states());
  h.insert(h.begin(), "n");
  out.header(h);
  for (std::size_t n = 0; n < beliefs.size(); ++n) {
    out << static_cast<long long>(n);
    for (double r : beliefs[n].probs()) out << r;
    out.end_row();
  }
  return 0;
}

int cmd_crosscheck(const Overrides& o) {
  RunConfig cfg = resolve(o);
  Problem p(cfg);
  SolveResult res = solve_and_write(cfg, p);
  CrossCheckOptions opts;
  opts.n_traj = cfg.sim.n_traj;
  opts.seed = cfg.sim.seed;
  opts.grid_slack = cfg.sim.grid_slack;
  opts.sim = sim_options(cfg, p);
  std::vector<Point> x0s;
  for (double x : cfg.sim.x0) x0s.push_back(scalar_point(x));
  auto rows = cross_check(*p.compiled, res.values.argmins, x0s, opts);

  CsvWriter out(path_in(cfg, "zscores.csv"));
  out.header({"x0", "mc_mean", "mc_stderr", "filtered_value", "z"});
  bool ok = true;
  for (const auto& r : rows) {
    out << r.x0[0] << r.mc_mean << r.mc_stderr << r.filtered_value << r.z;
    out.end_row();
    std::cout << "x0 = " << format_number(r.x0[0]) << ": mc " << format_number(r.mc_mean) << ", filtered "
              << format_number(r.filtered_value) << ", z " << format_number(r.z) << "\n";
    if (!(std::abs(r.z) < 4.0)) ok = false;
  }
  return ok ? 0 : 3;
}

int cmd_sweep(const Overrides& o) {
  RunConfig cfg = resolve(o);
  PopdmpModel model = build_model(cfg.model);
  auto grid = std::make_shared<SimplexGrid>(model.num_states(), cfg.solver.grid_k);
  auto rows = sigma_sweep(model, grid, build_family(cfg.solver.family), build_quadrature(cfg, model),
                          cfg.sweep.sigmas, {cfg.solver.tol, cfg.solver.max_iter}, cfg.solver.kernel);
  CsvWriter out(path_in(cfg, "sigma_sweep.csv"));
  out.header({"sigma", "gap", "agreement", "interior_agreement", "iterations"});
  for (const auto& r : rows) {
    out << r.sigma << r.gap << r.agreement << r.interior_agreement << static_cast<long long>(r.iterations);
    out.end_row();
    std::cout << "sigma " << format_number(r.sigma) << ": gap " << format_number(r.gap) << ", agreement "
              << format_number(r.agreement) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POPDMP filtered-MDP solver and simulator"};
  app.require_subcommand(1);
  Overrides o;
  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Overrides&);
  };
  const Cmd cmds[] = {
      {"solve", "value iteration; writes value.csv, policy.csv, report.csv", cmd_solve},
      {"simulate", "solve, then Monte Carlo evaluation; writes evaluation.csv, trajectories.csv", cmd_simulate},
      {"filter", "replay an event log through the filter; writes beliefs.csv", cmd_filter},
      {"crosscheck", "Monte Carlo vs filtered-MDP value of the solved policy; writes zscores.csv", cmd_crosscheck},
      {"sweep", "regularization bandwidth sweep; writes sigma_sweep.csv", cmd_sweep},
  };
  int (*chosen)(const Overrides&) = nullptr;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub, o);
    sub->callback([&chosen, run = c.run] { chosen = run; });
  }
  bool example = false;
  app.add_subcommand("example", "print the resolved built-in configuration")->callback([&] { example = true; });
  CLI11_PARSE(app, argc, argv);

  try {
    if (example) {
      std::cout << resolved_config_text(default_config());
      return 0;
    }
    return chosen(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
