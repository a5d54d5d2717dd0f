#include "popdmp/sim.hpp"

#include "popdmp/error.hpp"

#include <algorithm>
#include <cmath>

namespace popdmp {

// -- rng --------------------------------------------------------------------

RngStream::RngStream(std::uint64_t seed, std::uint64_t index) : seed_(seed), index_(index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  engine_.seed(seq);
}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RngStream::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

std::size_t RngStream::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ModelError("categorical draw with zero total weight");
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

// -- jumps ------------------------------------------------------------------

SampledJump sample_jump(const PopdmpModel& model, const Point& y, const RelaxedControl& r, RngStream& rng) {
  const double bound = model.hazard_upper;
  const bool constant = model.hazard_is_constant();
  double t = 0.0;
  Point z;
  for (;;) {
    t += rng.exponential(bound);
    z = flow(model, y, r, t);
    if (constant) break;
    const double rate = mixture_hazard(model, z, r.at(t));
    if (rng.uniform() * bound < rate) break;
  }

  SampledJump jump;
  jump.s = t;
  const auto& atoms = r.at(t).atoms();
  std::vector<double> weights(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) weights[i] = atoms[i].weight * model.hazard(z, atoms[i].action);
  jump.action = atoms[rng.categorical(weights)].action;

  std::vector<double> row(model.num_states(), 0.0);
  model.jump_kernel(z, jump.action, row);
  jump.y_next = rng.categorical(row);
  const auto& eps = model.noise.offsets[rng.categorical(model.noise.density)];
  jump.x = model.post_jump_states[jump.y_next] + eps;
  return jump;
}

// -- policies ---------------------------------------------------------------

BeliefPolicy as_belief_policy(const StationaryPolicy& policy) {
  return [&policy](const Belief& rho) { return policy(rho); };
}

BeliefPolicy constant_policy(RelaxedControl r) {
  return [r = std::move(r)](const Belief&) { return r; };
}

double default_horizon(const PopdmpModel& model, double tol) {
  if (!(model.cost_max > 0.0)) return 0.0;
  return std::max(0.0, std::log(model.cost_max / (model.discount * tol)) / model.discount);
}

// -- trajectories -----------------------------------------------------------

namespace {

// int_0^len e^{-beta (t0 + u)} c(Phi(y, u), r(u)) du
double segment_cost(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t0, double len,
                    double step) {
  if (!(len > 0.0) || !(model.cost_max > 0.0)) return 0.0;
  auto nodes = window_nodes(r, 0.0, len, step);
  auto times = node_times(nodes);
  auto path = flow_path(model, y, r, times);
  double total = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    total += nodes[k].weight * std::exp(-model.discount * times[k]) *
             mixture_cost(model, path[k], r.pieces()[nodes[k].piece]);
  return std::exp(-model.discount * t0) * total;
}

}  // namespace

Trajectory simulate_trajectory(const PopdmpModel& model, const Point& x0, const BeliefPolicy& policy,
                               RngStream& rng, const SimOptions& options) {
  if (model.hazard_controlled && !options.kernel)
    throw ConfigError("hazard or jump kernel depends on the action: a regularization kernel is required");
  const double horizon = options.horizon > 0.0 ? options.horizon : default_horizon(model);

  Trajectory traj;
  traj.x0 = x0;
  Belief mu(model.initial_belief(x0));
  std::size_t y = options.forced_start ? *options.forced_start : rng.categorical(mu.span());
  if (y >= model.num_states()) throw ConfigError("forced start state out of range");
  double t = 0.0;
  traj.times.push_back(0.0);
  traj.states.push_back(y);
  traj.observations.push_back(x0);

  for (;;) {
    RelaxedControl r = policy(mu);
    const Point& y0 = model.post_jump_states[y];
    SampledJump jump = sample_jump(model, y0, r, rng);
    const bool last = t + jump.s >= horizon;
    const double len = last ? horizon - t : jump.s;
    const double c = segment_cost(model, y0, r, t, len, options.step);
    traj.controls.push_back(r);
    traj.segment_costs.push_back(c);
    traj.cost += c;
    if (last) {
      traj.truncated = true;
      break;
    }
    t += jump.s;
    y = jump.y_next;
    traj.times.push_back(t);
    traj.states.push_back(y);
    traj.observations.push_back(jump.x);
    mu = options.kernel ? update_regularized(model, mu, r, jump.s, jump.x, *options.kernel)
                        : update(model, mu, r, jump.s, jump.x);
  }
  return traj;
}

McEstimate evaluate_policy_mc(const PopdmpModel& model, const Point& x0, const BeliefPolicy& policy,
                              std::size_t n_traj, std::uint64_t seed, const SimOptions& options, bool parallel) {
  if (n_traj == 0) throw ConfigError("n_traj must be positive");
  std::vector<double> costs(n_traj);
  std::vector<char> truncated(n_traj);
  const auto n = static_cast<long>(n_traj);
#pragma omp parallel for schedule(dynamic, 64) if (parallel)
  for (long i = 0; i < n; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    Trajectory traj = simulate_trajectory(model, x0, policy, rng, options);
    costs[static_cast<std::size_t>(i)] = traj.cost;
    truncated[static_cast<std::size_t>(i)] = traj.truncated;
  }

  McEstimate est;
  est.n = n_traj;
  double sum = 0.0;
  for (std::size_t i = 0; i < n_traj; ++i) {
    sum += costs[i];
    est.truncated += truncated[i];
  }
  est.mean = sum / static_cast<double>(n_traj);
  if (n_traj > 1) {
    double ss = 0.0;
    for (double c : costs) ss += (c - est.mean) * (c - est.mean);
    est.std_error = std::sqrt(ss / static_cast<double>(n_traj - 1) / static_cast<double>(n_traj));
  }
  return est;
}

std::vector<CrossCheckRow> cross_check(const CompiledOperator& op, std::span<const std::int32_t> choice,
                                       const std::vector<Point>& x0s, const CrossCheckOptions& options) {
  const auto& bop = op.belief_operator();
  const auto& model = bop.model();
  SolveResult fixed = evaluate_decision_rule(op, choice, options.solve);
  StationaryPolicy policy(op.grid(), std::vector<std::int32_t>(choice.begin(), choice.end()), bop.family());
  SimOptions sim = options.sim;
  if (!sim.kernel) sim.kernel = bop.kernel();
  BeliefPolicy belief_policy = as_belief_policy(policy);

  std::vector<CrossCheckRow> rows;
  for (const auto& x0 : x0s) {
    CrossCheckRow row;
    row.x0 = x0;
    McEstimate mc = evaluate_policy_mc(model, x0, belief_policy, options.n_traj, options.seed, sim);
    row.mc_mean = mc.mean;
    row.mc_stderr = mc.std_error;
    row.filtered_value = interpolate(fixed.values, Belief(model.initial_belief(x0)));
    const double scale = std::sqrt(mc.std_error * mc.std_error + options.grid_slack * options.grid_slack);
    row.z = scale > 0.0 ? (row.mc_mean - row.filtered_value) / scale : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace popdmp
