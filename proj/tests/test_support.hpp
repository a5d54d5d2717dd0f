#pragma once

#include "popdmp/config.hpp"
#include "popdmp/mdp.hpp"
#include "popdmp/model.hpp"
#include "popdmp/sim.hpp"
#include "popdmp/solver.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <random>

namespace popdmp::testing {

inline constexpr double kKsCritical1pct = 1.6276;  // asymptotic, times 1/sqrt(N)

inline std::size_t family_index(const ControlFamily& f, const std::string& label) {
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f.labels[k] == label) return k;
  throw std::runtime_error("no candidate " + label);
}

/// Particle steering with c = 0.
inline PopdmpModel zero_cost_model() {
  PopdmpModel m = particle_steering();
  m.cost_rate = [](const Point&, const Action&) { return 0.0; };
  m.cost_max = 0.0;
  return m;
}

/// b(y, a) = a * y on a one-point E0.
inline PopdmpModel linear_field_model() {
  PopdmpModel m;
  m.post_jump_states = {scalar_point(1.0)};
  m.actions = {scalar_point(0.0), scalar_point(2.0)};
  m.drift = VectorField([](const Point& y, const Action& a) -> Point { return Point(a.array() * y.array()); });
  m.hazard = [](const Point&, const Action& a) { return 1.0 + std::abs(a[0]); };
  m.hazard_lower = 1.0;
  m.hazard_upper = 3.0;
  m.hazard_controlled = true;
  m.jump_kernel = [](const Point&, const Action&, std::span<double> out) { out[0] = 1.0; };
  m.noise.offsets = {scalar_point(0.0)};
  m.noise.density = {1.0};
  m.cost_rate = [](const Point&, const Action&) { return 1.0; };
  m.cost_max = 1.0;
  m.discount = 1.0;
  m.initial_kernel = uniform_initial_kernel(1);
  return m;
}

/// One-point E0 with constant cost and hazard.
inline PopdmpModel degenerate_model(double cost, double hazard, double beta) {
  ModelSpec s;
  s.name = "degenerate";
  s.states = {0.0};
  s.hazard_constant = hazard;
  s.cost_breakpoints = {0.0};
  s.cost_values = {cost};
  s.kernel_breakpoints = {0.0};
  s.kernel_rows = {{1.0}};
  s.noise_offsets = {0.0};
  s.noise_weights = {1.0};
  s.discount = beta;
  return build_model(s);
}

inline std::vector<double> random_belief(std::mt19937_64& rng, std::size_t d) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(d);
  double total = 0.0;
  for (auto& v : p) total += v = e(rng);
  for (auto& v : p) v /= total;
  return p;
}

/// Particle-steering problem solved on a K grid with the default family; built once per K.
struct SolvedExample {
  PopdmpModel model = particle_steering();
  StageQuadrature quad = StageQuadrature::for_model(model);
  std::unique_ptr<BeliefOperator> op;
  std::shared_ptr<const SimplexGrid> grid;
  std::unique_ptr<CompiledOperator> compiled;
  SolveResult result;
  double seconds = 0.0;

  explicit SolvedExample(std::size_t K, double tol = 1e-4) {
    auto start = std::chrono::steady_clock::now();
    op = std::make_unique<BeliefOperator>(model, build_family(default_family_entries()), quad, std::nullopt);
    grid = std::make_shared<SimplexGrid>(3, K);
    compiled = std::make_unique<CompiledOperator>(*op, grid);
    result = value_iteration(*compiled, {tol, 200});
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

inline const SolvedExample& solved_example(std::size_t K) {
  static std::map<std::size_t, std::unique_ptr<SolvedExample>> cache;
  auto& slot = cache[K];
  if (!slot) slot = std::make_unique<SolvedExample>(K);
  return *slot;
}

}  // namespace popdmp::testing
