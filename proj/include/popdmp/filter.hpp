#pragma once

#include "popdmp/model.hpp"
#include "popdmp/quadrature.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace popdmp {

/// Probability vector over E0: the filter state rho.
class Belief {
 public:
  Belief() = default;
  /// Renormalises when the sum is within 1e-8 of one; throws ModelError otherwise.
  explicit Belief(std::vector<double> probs);

  static Belief uniform(std::size_t d);
  static Belief dirac(std::size_t d, std::size_t index);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }
  std::span<const double> span() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Smoothing kernel h_sigma used by the regularised filter.
struct RegularizationKernel {
  enum class Kind { gaussian, epanechnikov };

  Kind kind = Kind::gaussian;
  double sigma = 0.1;

  double operator()(double t) const;
  /// Integration half-width around s.
  double window() const { return 5.0 * sigma; }
  /// Simpson step used inside the smoothing window.
  double step() const { return sigma / 20.0 < 0.01 ? sigma / 20.0 : 0.01; }
};

const char* kernel_name(RegularizationKernel::Kind kind);

/// Distinct observation points x = y' + eps together with f(x - y') for every y'.
struct ObservationSupport {
  std::vector<Point> points;
  std::vector<double> likelihood;  // points.size() x d, row-major
  std::size_t num_states = 0;

  double f(std::size_t x, std::size_t y_next) const { return likelihood[x * num_states + y_next]; }
};

ObservationSupport observation_support(const PopdmpModel& model);

/// Sub-density rows along a list of quadrature nodes for one start state y:
/// row(k)[y'] = exp(-Gamma^r(y, t_k)) * sum_a w lambda(Phi, a) Q(y' | Phi, a).
struct DensityPath {
  std::size_t num_states = 0;
  std::vector<double> rows;   // nodes x d
  std::vector<double> decay;  // exp(-Gamma^r(y, t_k))
  std::vector<Point> positions;

  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(rows).subspan(k * num_states, num_states);
  }
};

DensityPath density_path(const PopdmpModel& model, std::size_t y, const RelaxedControl& r,
                         const std::vector<QuadNode>& nodes);

/// Joint sub-density q~(s, y', x | y, r) of jump time, post-jump state and observation.
double q_tilde(const PopdmpModel& model, double s, std::size_t y_next, const Point& x, std::size_t y,
               const RelaxedControl& r);

/// q~SX(s, x | y, r) = sum_{y'} q~(s, y', x | y, r).
double q_tilde_sx(const PopdmpModel& model, double s, const Point& x, std::size_t y,
                  const RelaxedControl& r);

/// Bayes updating operator Psi(rho, r, s, x).
Belief update(const PopdmpModel& model, const Belief& rho, const RelaxedControl& r, double s,
              const Point& x);

/// Regularised operator: the jump-time argument is smoothed by h_sigma.
Belief update_regularized(const PopdmpModel& model, const Belief& rho, const RelaxedControl& r,
                          double s, const Point& x, const RegularizationKernel& kernel);

struct FilterEvent {
  RelaxedControl control;  // control used on the interval ending at this jump
  double s = 0.0;          // inter-jump time
  Point x;                 // observation after the jump
};

/// mu_0 = Q0(.|x0), mu_n = Psi(mu_{n-1}, r_{n-1}, s_n, x_n).
std::vector<Belief> filter_trajectory(const PopdmpModel& model, const Point& x0,
                                      const std::vector<FilterEvent>& events,
                                      const std::optional<RegularizationKernel>& kernel = std::nullopt);

/// Simpson nodes on [a, b] split at the control breakpoints.
std::vector<QuadNode> window_nodes(const RelaxedControl& r, double a, double b, double h);

}  // namespace popdmp
