#pragma once

#include "popdmp/mdp.hpp"
#include "popdmp/simplex_grid.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace popdmp {

/// L restricted to grid points, compiled into sparse rows: because the
/// interpolated value function enters linearly,
///   (Lv)(rho_i, r_k) = g(i, k) + sum_j W(i, k, j) v_j.
/// Rows are built in parallel; each row is deterministic.
class CompiledOperator {
 public:
  CompiledOperator(const BeliefOperator& op, std::shared_ptr<const SimplexGrid> grid);

  const BeliefOperator& belief_operator() const { return *op_; }
  const std::shared_ptr<const SimplexGrid>& grid() const { return grid_; }
  std::size_t num_points() const { return grid_->size(); }
  std::size_t num_candidates() const { return num_candidates_; }
  std::size_t nonzeros() const { return cols_.size(); }

  double stage_cost(std::size_t i, std::size_t k) const { return stage_[i * num_candidates_ + k]; }
  double apply(std::size_t i, std::size_t k, std::span<const double> v) const;

 private:
  const BeliefOperator* op_;
  std::shared_ptr<const SimplexGrid> grid_;
  std::size_t num_candidates_;
  std::vector<double> stage_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> cols_;
  std::vector<double> weights_;
};

struct SweepOutput {
  double residual = 0.0;  // sup |out - v|
};

/// One Jacobi sweep out = T v on every grid point; argmins filled when non-empty.
SweepOutput sweep_parallel(const CompiledOperator& op, std::span<const double> v, std::span<double> out,
                           std::span<std::int32_t> argmins);
/// Same sweep, single thread.
SweepOutput sweep_serial(const CompiledOperator& op, std::span<const double> v, std::span<double> out,
                         std::span<std::int32_t> argmins);
/// Reference sweep: evaluates T directly with the tabulated operator and interpolation.
SweepOutput sweep_reference(const BeliefOperator& op, const ValueGrid& v, std::span<double> out,
                            std::span<std::int32_t> argmins);

struct SolveOptions {
  double tol = 1e-4;
  std::size_t max_iter = 200;
};

struct SolveReport {
  std::size_t iterations = 0;
  std::vector<double> residuals;
  double final_residual = 0.0;  // sup |T V - V| for the returned V
  bool converged = false;
  double wall_seconds = 0.0;
};

struct SolveResult {
  ValueGrid values;
  SolveReport report;
};

/// V_0 = 0, V_{n+1} = T V_n by Jacobi sweeps until sup |V_{n+1} - V_n| < tol.
/// The stored argmins are those of the final check sweep T V.
SolveResult value_iteration(const CompiledOperator& op, const SolveOptions& options);

/// Serial direct-evaluation value iteration, kept as the reference for tests.
SolveResult value_iteration_reference(const BeliefOperator& op, std::shared_ptr<const SimplexGrid> grid,
                                      const SolveOptions& options);

/// Fixed point of T_f for the decision rule choosing candidate choice[i] at grid point i.
SolveResult evaluate_decision_rule(const CompiledOperator& op, std::span<const std::int32_t> choice,
                                   const SolveOptions& options);

/// Stationary decision rule f: belief -> relaxed control, read from the argmin
/// at the interpolation-nearest grid point.
class StationaryPolicy {
 public:
  StationaryPolicy(std::shared_ptr<const SimplexGrid> grid, std::vector<std::int32_t> choice,
                   ControlFamily family);

  static StationaryPolicy constant(std::shared_ptr<const SimplexGrid> grid, ControlFamily family,
                                   std::size_t index);

  std::size_t candidate_index(const Belief& rho) const;
  const RelaxedControl& operator()(const Belief& rho) const {
    return family_.candidates[candidate_index(rho)];
  }
  /// Exact re-minimisation of L against v at an arbitrary belief.
  std::size_t exact_index(const BeliefOperator& op, const ValueGrid& v, const Belief& rho) const;

  const std::vector<std::int32_t>& choice() const { return choice_; }
  const ControlFamily& family() const { return family_; }
  const std::shared_ptr<const SimplexGrid>& grid() const { return grid_; }

 private:
  std::shared_ptr<const SimplexGrid> grid_;
  std::vector<std::int32_t> choice_;
  ControlFamily family_;
};

StationaryPolicy extract_policy(const ValueGrid& vg, const ControlFamily& family);

struct SigmaSweepRow {
  double sigma = 0.0;
  double gap = 0.0;                 // sup |V_sigma - V_plain|
  double agreement = 0.0;           // fraction of grid points with equal argmin
  double interior_agreement = 0.0;  // same, over points with all entries > 0
  std::size_t iterations = 0;
};

/// Solves with the plain filter and with the regularised filter for each sigma.
/// Requires a model whose hazard and kernel do not depend on the action.
std::vector<SigmaSweepRow> sigma_sweep(const PopdmpModel& model, std::shared_ptr<const SimplexGrid> grid,
                                       const ControlFamily& family, const StageQuadrature& quad,
                                       const std::vector<double>& sigmas, const SolveOptions& options,
                                       RegularizationKernel::Kind kind = RegularizationKernel::Kind::gaussian);

}  // namespace popdmp
