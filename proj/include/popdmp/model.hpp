#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace popdmp {

inline constexpr int kMaxDim = 4;

/// Point in R^D (state space) or R^m (action space), stored inline.
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Action = Point;

Point scalar_point(double v);
Point make_point(std::initializer_list<double> coords);

/// Compact action set A, a box in R^m.
struct ActionBox {
  Point lower;
  Point upper;

  bool contains(const Action& a) const;
};

struct ActionAtom {
  Action action;
  double weight = 0.0;
};

/// Finitely supported probability measure on A.
class ActionMixture {
 public:
  ActionMixture() = default;
  explicit ActionMixture(std::vector<ActionAtom> atoms);

  static ActionMixture dirac(Action a);
  static ActionMixture dirac(double a);

  const std::vector<ActionAtom>& atoms() const { return atoms_; }
  Action mean() const;

  friend bool operator==(const ActionMixture& lhs, const ActionMixture& rhs);

 private:
  std::vector<ActionAtom> atoms_;
};

/// Piecewise-constant relaxed control: pieces[i] is used on [t_i, t_{i+1}),
/// with t_0 = 0 and the last piece extending to infinity.
class RelaxedControl {
 public:
  RelaxedControl() = default;
  RelaxedControl(std::vector<double> breakpoints, std::vector<ActionMixture> pieces);

  static RelaxedControl constant(ActionMixture m);
  static RelaxedControl constant(double a);
  /// Point mass at `a` on [0, tau), then point mass at `after`.
  static RelaxedControl switched(double a, double tau, double after = 0.0);

  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<ActionMixture>& pieces() const { return pieces_; }

  std::size_t piece_index(double t) const;
  const ActionMixture& at(double t) const { return pieces_[piece_index(t)]; }
  double piece_start(std::size_t i) const { return i == 0 ? 0.0 : breakpoints_[i - 1]; }
  double piece_end(std::size_t i) const {
    return i < breakpoints_.size() ? breakpoints_[i] : std::numeric_limits<double>::infinity();
  }

  /// Throws ModelError if any atom lies outside the action box.
  void check_actions(const ActionBox& box) const;

  friend bool operator==(const RelaxedControl& lhs, const RelaxedControl& rhs);

 private:
  std::vector<double> breakpoints_;
  std::vector<ActionMixture> pieces_{ActionMixture::dirac(0.0)};
};

std::string describe(const ActionMixture& m);
std::string describe(const RelaxedControl& r);

using ClosedFormFlow = std::function<Point(const Point& y, const RelaxedControl& r, double t)>;
using VectorField = std::function<Point(const Point& y, const Action& a)>;
using HazardRate = std::function<double(const Point& y, const Action& a)>;
using JumpKernel = std::function<void(const Point& y, const Action& a, std::span<double> out)>;
using CostRate = std::function<double(const Point& y, const Action& a)>;
using InitialKernel = std::function<void(const Point& x, std::span<double> out)>;

/// Additive observation noise with a density w.r.t. counting measure on
/// finitely many offsets.
struct NoiseModel {
  std::vector<Point> offsets;
  std::vector<double> density;

  /// f(eps); zero when eps is not one of the offsets.
  double density_at(const Point& eps) const;
  void validate() const;
};

/// Complete problem data of a controlled POPDMP with finite post-jump set.
struct PopdmpModel {
  std::vector<Point> post_jump_states;
  ActionBox actions;
  std::variant<ClosedFormFlow, VectorField> drift;
  HazardRate hazard;
  double hazard_lower = 1.0;
  double hazard_upper = 1.0;
  JumpKernel jump_kernel;
  NoiseModel noise;
  CostRate cost_rate;
  double cost_max = 0.0;
  double discount = 1.0;
  InitialKernel initial_kernel;
  bool hazard_controlled = false;
  double h_ode = 1e-3;
  double h_quad = 1e-3;

  std::size_t num_states() const { return post_jump_states.size(); }
  int dim() const { return static_cast<int>(post_jump_states.front().size()); }
  bool hazard_is_constant() const { return hazard_lower == hazard_upper; }

  /// Index of `y` in E0, or -1.
  long state_index(const Point& y) const;

  /// Q0(.|x) as a probability vector over E0.
  std::vector<double> initial_belief(const Point& x) const;

  /// Checks the declared bounds and normalisations on a test grid.
  void validate() const;
};

/// 1-D piecewise-linear function, constant beyond the outer breakpoints.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  PiecewiseLinear(std::vector<double> breakpoints, std::vector<double> values);

  double operator()(double y) const;
  double max_value() const;
  double min_value() const;
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

/// 1-D piecewise-linear family of probability rows.
class PiecewiseLinearRows {
 public:
  PiecewiseLinearRows() = default;
  PiecewiseLinearRows(std::vector<double> breakpoints, std::vector<std::vector<double>> rows);

  void operator()(double y, std::span<double> out) const;
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<std::vector<double>> rows_;
};

/// Phi^r(y,t) = y + int_0^t (mean action) du; requires action dim == state dim.
ClosedFormFlow action_velocity_flow();

InitialKernel bayes_initial_kernel(std::vector<Point> states, NoiseModel noise);
InitialKernel uniform_initial_kernel(std::size_t d);
InitialKernel dirac_initial_kernel(std::size_t d, std::size_t index);

/// The particle-steering example: E0 = {-2,0,2}, A = [-1,1], unit-speed
/// drift, lambda = 1, beta = 1, piecewise-linear cost and kernel, uniform
/// noise on {-1,0,1}. Q0 defaults to the Bayes posterior under a uniform prior.
PopdmpModel particle_steering();

// -- dynamics ---------------------------------------------------------------

/// sum_atoms w * b(y, a)
Point mixture_velocity(const VectorField& field, const Point& y, const ActionMixture& m);
/// sum_atoms w * lambda(y, a)
double mixture_hazard(const PopdmpModel& model, const Point& y, const ActionMixture& m);
/// sum_atoms w * c(y, a)
double mixture_cost(const PopdmpModel& model, const Point& y, const ActionMixture& m);

/// Phi^r(y, t).
Point flow(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t);

/// Phi^r(y, t) at every entry of an ascending list of times, integrating once.
std::vector<Point> flow_path(const PopdmpModel& model, const Point& y, const RelaxedControl& r,
                             std::span<const double> times);

/// Lambda^r(y, t) = int_0^t sum w lambda(Phi^r(y,s), a) ds.
double big_lambda(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t);

/// Gamma^r(y, t) = beta t + Lambda^r(y, t).
double gamma(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t);

// -- policies ---------------------------------------------------------------

/// Observed history h_n = (x0, s1, x1, ..., sn, xn).
struct History {
  Point x0;
  std::vector<std::pair<double, Point>> events;
};

/// Piecewise open-loop policy: action mixture at elapsed time t since the last jump.
using PiecewisePolicy = std::function<ActionMixture(const History& h, double t)>;
/// Discrete-time policy: one relaxed control per history.
using DiscretePolicy = std::function<RelaxedControl(const History& h)>;

/// Builds a relaxed control matching p(h, .) at every probe time; a new
/// piece starts at the first probe where the mixture changes.
RelaxedControl relaxed_control_from(const PiecewisePolicy& p, const History& h,
                                    std::span<const double> probes);

struct CorrespondenceResult {
  DiscretePolicy discrete;
  PiecewisePolicy piecewise;
  std::size_t mismatches = 0;
};

/// pi^P -> pi^D -> pi^P; mismatches counts probe times (within the horizon)
/// where the re-expanded mixture differs from the original on history h.
CorrespondenceResult correspondence_roundtrip(const PiecewisePolicy& p, double horizon,
                                              std::vector<double> probes, const History& h);

}  // namespace popdmp
