#pragma once

#include "popdmp/filter.hpp"
#include "popdmp/mdp.hpp"
#include "popdmp/model.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace popdmp {

/// One-dimensional model described by tables. A built-in name expands to
/// the same fields, so the resolved echo is always a complete inline model.
struct ModelSpec {
  std::string name = "particle-steering";
  std::vector<double> states;
  double action_lower = -1.0;
  double action_upper = 1.0;
  std::optional<double> hazard_constant;
  std::vector<double> hazard_breakpoints;
  std::vector<double> hazard_values;
  std::vector<double> cost_breakpoints;
  std::vector<double> cost_values;
  std::vector<double> kernel_breakpoints;
  std::vector<std::vector<double>> kernel_rows;
  std::vector<double> noise_offsets;
  std::vector<double> noise_weights;
  double discount = 1.0;
  std::string initial = "bayes";  // bayes | uniform | dirac
  std::size_t initial_index = 0;  // used by dirac
};

struct SolverSpec {
  std::size_t grid_k = 40;
  double tol = 1e-4;
  std::size_t max_iter = 200;
  std::optional<double> sigma;  // empty: plain filter
  RegularizationKernel::Kind kernel = RegularizationKernel::Kind::gaussian;
  double quad_step = 0.005;
  double tail_tol = 1e-8;
  double tie_tol = 1e-9;
  std::vector<FamilyEntry> family = default_family_entries();
};

struct SimSpec {
  std::size_t n_traj = 100000;
  std::uint64_t seed = 1;
  double horizon = 0.0;  // 0: derived from the model
  double step = 0.01;
  std::vector<double> x0 = {-2.0, 0.0, 2.0};
  double grid_slack = 0.005;
};

struct SweepSpec {
  std::vector<double> sigmas = {0.2, 0.1, 0.05};
};

struct FilterSpec {
  double x0 = 0.0;
  std::string events;  // CSV path with columns r_piece_spec,s,x
};

struct RunConfig {
  ModelSpec model;
  SolverSpec solver;
  SimSpec sim;
  SweepSpec sweep;
  FilterSpec filter;
  std::string output = "out";
  int workers = 0;  // 0: OpenMP default
};

/// Tables of the built-in particle-steering model.
ModelSpec builtin_model(const std::string& name);

RunConfig default_config();

/// Parses JSON text; `source` names the input in error messages.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// Checks every invariant; throws ConfigError naming the first violation.
void validate(const RunConfig& cfg);

/// Fully resolved configuration as JSON text; identical input gives identical bytes.
std::string resolved_config_text(const RunConfig& cfg);

PopdmpModel build_model(const ModelSpec& spec);
StageQuadrature build_quadrature(const RunConfig& cfg, const PopdmpModel& model);
std::optional<RegularizationKernel> build_kernel(const SolverSpec& spec);

/// Parses a relaxed control written as `a*w+a*w;a*w@t;...` (see describe()).
RelaxedControl parse_control(const std::string& text);

}  // namespace popdmp
