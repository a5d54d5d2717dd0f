#pragma once

#include "popdmp/filter.hpp"
#include "popdmp/model.hpp"
#include "popdmp/solver.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace popdmp {

/// Independent random stream for one trajectory index under a master seed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t index() const { return index_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double exponential(double rate);
  /// Index drawn with probability proportional to weights (not all zero).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::uint64_t seed_;
  std::uint64_t index_;
  std::mt19937_64 engine_;
};

struct SampledJump {
  double s = 0.0;
  std::size_t y_next = 0;
  Point x;
  Action action;
};

/// One inter-jump interval from post-jump point y under r, by thinning against
/// hazard_upper. The action at the jump is drawn with weight w * lambda(z, a).
SampledJump sample_jump(const PopdmpModel& model, const Point& y, const RelaxedControl& r, RngStream& rng);

/// Maps the current filter state to the relaxed control for the next interval.
using BeliefPolicy = std::function<RelaxedControl(const Belief&)>;

BeliefPolicy as_belief_policy(const StationaryPolicy& policy);
BeliefPolicy constant_policy(RelaxedControl r);

struct SimOptions {
  double horizon = 0.0;  // 0: default_horizon(model)
  double step = 0.01;    // Simpson step for cost accrual
  std::optional<std::size_t> forced_start;
  std::optional<RegularizationKernel> kernel;
};

/// Smallest H with exp(-beta H) c_max / beta < tol.
double default_horizon(const PopdmpModel& model, double tol = 1e-6);

struct Trajectory {
  Point x0;
  std::vector<double> times;          // T_0 = 0, T_1, ...
  std::vector<std::size_t> states;    // Y_n
  std::vector<Point> observations;    // X_n
  std::vector<RelaxedControl> controls;  // control on [T_n, T_{n+1})
  std::vector<double> segment_costs;  // discounted cost accrued on [T_n, T_{n+1})
  double cost = 0.0;
  bool truncated = false;
};

Trajectory simulate_trajectory(const PopdmpModel& model, const Point& x0, const BeliefPolicy& policy,
                               RngStream& rng, const SimOptions& options = {});

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::size_t truncated = 0;
};

/// Sample mean and standard error over n_traj streams (seed, 0..n_traj-1).
/// Costs are reduced in index order, so the result does not depend on threads.
McEstimate evaluate_policy_mc(const PopdmpModel& model, const Point& x0, const BeliefPolicy& policy,
                              std::size_t n_traj, std::uint64_t seed, const SimOptions& options = {},
                              bool parallel = true);

struct CrossCheckRow {
  Point x0;
  double mc_mean = 0.0;
  double mc_stderr = 0.0;
  double filtered_value = 0.0;  // T_f fixed point interpolated at Q0(.|x0)
  double z = 0.0;
};

struct CrossCheckOptions {
  std::size_t n_traj = 100000;
  std::uint64_t seed = 1;
  double grid_slack = 0.005;  // added in quadrature to the MC standard error
  SimOptions sim;
  SolveOptions solve{1e-6, 1000};
};

/// Compares MC cost of the stationary decision rule `choice` with its
/// filtered-MDP value at each initial observation.
std::vector<CrossCheckRow> cross_check(const CompiledOperator& op, std::span<const std::int32_t> choice,
                                       const std::vector<Point>& x0s, const CrossCheckOptions& options);

}  // namespace popdmp
