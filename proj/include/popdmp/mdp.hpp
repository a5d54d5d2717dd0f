#pragma once

#include "popdmp/filter.hpp"
#include "popdmp/model.hpp"
#include "popdmp/simplex_grid.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace popdmp {

/// Finite search set standing in for the infimum over all relaxed controls.
/// Order matters: ties are resolved towards the lowest index.
struct ControlFamily {
  std::vector<RelaxedControl> candidates;
  std::vector<std::string> labels;

  std::size_t size() const { return candidates.size(); }
  void add(RelaxedControl r, std::string label);
  void validate(const PopdmpModel& model) const;
};

/// One entry of a family description: a constant action, or an action held
/// on [0, tau) for every tau in [tau_min, tau_max] (step tau_step), then `after`.
struct FamilyEntry {
  enum class Kind { constant, switched };
  Kind kind = Kind::constant;
  double action = 0.0;
  double after = 0.0;
  double tau_min = 0.1;
  double tau_max = 2.0;
  double tau_step = 0.1;
};

ControlFamily build_family(const std::vector<FamilyEntry>& entries);

/// Stay, +1 switches, -1 switches, then constant +1 and -1.
std::vector<FamilyEntry> default_family_entries();

/// Truncation horizon and Simpson step for stage integrals.
struct StageQuadrature {
  double t_max = 10.0;
  double h = 0.005;

  /// Smallest t_max (rounded up to a multiple of 2h) with
  /// max(c_max, lambda_upper) * exp(-(beta + lambda_lower) t) / (beta + lambda_lower) < tail_tol.
  static StageQuadrature for_model(const PopdmpModel& model, double h = 0.005, double tail_tol = 1e-8);
};

/// g(y, r): expected discounted cost until the first jump from E0 point y.
double stage_cost_g(const PopdmpModel& model, std::size_t y, const RelaxedControl& r,
                    const StageQuadrature& quad);

/// g^(rho, r) = sum_y rho(y) g(y, r).
double stage_cost_belief(const PopdmpModel& model, const Belief& rho, const RelaxedControl& r,
                         const StageQuadrature& quad);

/// int v dQ^(.|rho, r), evaluated node by node through the filter operators.
/// Uses Psi when no kernel is given (only allowed for uncontrolled hazard/kernel).
double expected_next_value(const PopdmpModel& model, const ValueGrid& v, const Belief& rho,
                           const RelaxedControl& r, const std::optional<RegularizationKernel>& kernel,
                           const StageQuadrature& quad);

/// (Lv)(rho, r) = g^(rho, r) + int v dQ^(.|rho, r).
double L_operator(const PopdmpModel& model, const ValueGrid& v, const Belief& rho,
                  const RelaxedControl& r, const std::optional<RegularizationKernel>& kernel,
                  const StageQuadrature& quad);

struct TResult {
  double value = 0.0;
  std::size_t argmin = 0;
};

/// Lowest index whose value lies within tie_tol * max(1, |min|) of the minimum.
TResult argmin_with_ties(std::span<const double> values, double tie_tol);

/// (Tv)(rho) = min over the family of (Lv)(rho, r).
TResult T_operator(const PopdmpModel& model, const ValueGrid& v, const Belief& rho,
                   const ControlFamily& family, const std::optional<RegularizationKernel>& kernel,
                   const StageQuadrature& quad, double tie_tol = 1e-9);

/// Belief-independent data of one candidate control on the stage quadrature:
/// per node, the d x d sub-density A[y][y'] and (when regularised) its
/// h_sigma-smoothed version used inside the filter.
class StageTable {
 public:
  StageTable() = default;
  StageTable(const PopdmpModel& model, const RelaxedControl& r, const StageQuadrature& quad,
             const std::optional<RegularizationKernel>& kernel);

  std::size_t num_nodes() const { return weights_.size(); }
  std::size_t num_states() const { return d_; }
  double weight(std::size_t k) const { return weights_[k]; }
  double stage_cost(std::size_t y) const { return stage_cost_[y]; }
  std::span<const double> density(std::size_t k) const {
    return std::span<const double>(density_).subspan(k * d_ * d_, d_ * d_);
  }
  std::span<const double> filter_density(std::size_t k) const {
    const auto& src = smoothed_.empty() ? density_ : smoothed_;
    return std::span<const double>(src).subspan(k * d_ * d_, d_ * d_);
  }

 private:
  std::size_t d_ = 0;
  std::vector<double> weights_;
  std::vector<double> stage_cost_;
  std::vector<double> density_;
  std::vector<double> smoothed_;
};

/// Tabulated L and T operators for a fixed model, family, quadrature and kernel.
class BeliefOperator {
 public:
  BeliefOperator(const PopdmpModel& model, ControlFamily family, StageQuadrature quad,
                 std::optional<RegularizationKernel> kernel, double tie_tol = 1e-9);

  const PopdmpModel& model() const { return *model_; }
  const ControlFamily& family() const { return family_; }
  const StageQuadrature& quadrature() const { return quad_; }
  const std::optional<RegularizationKernel>& kernel() const { return kernel_; }
  const ObservationSupport& observations() const { return obs_; }
  const StageTable& table(std::size_t k) const { return tables_[k]; }
  double tie_tol() const { return tie_tol_; }

  double stage_cost(const Belief& rho, std::size_t k) const;

  /// Calls visit(weight, next_belief) for every quadrature node and
  /// observation with positive mass; weight includes the Simpson weight.
  template <class Visit>
  void for_each_successor(std::span<const double> rho, std::size_t k, Visit&& visit) const;

  double expected_next(const ValueGrid& v, const Belief& rho, std::size_t k) const;
  double L(const ValueGrid& v, const Belief& rho, std::size_t k) const;
  TResult T(const ValueGrid& v, const Belief& rho) const;

 private:
  const PopdmpModel* model_;
  ControlFamily family_;
  StageQuadrature quad_;
  std::optional<RegularizationKernel> kernel_;
  double tie_tol_;
  ObservationSupport obs_;
  std::vector<StageTable> tables_;
};

template <class Visit>
void BeliefOperator::for_each_successor(std::span<const double> rho, std::size_t k,
                                        Visit&& visit) const {
  const StageTable& tab = tables_[k];
  const std::size_t d = tab.num_states();
  const std::size_t nx = obs_.points.size();
  std::array<double, kMaxGridDim> joint{}, filt{}, post{};
  for (std::size_t j = 0; j < tab.num_nodes(); ++j) {
    const double wj = tab.weight(j);
    auto A = tab.density(j);
    auto F = tab.filter_density(j);
    const bool smoothed = A.data() != F.data();
    for (std::size_t yn = 0; yn < d; ++yn) {
      double a = 0.0, f = 0.0;
      for (std::size_t y = 0; y < d; ++y) {
        a += rho[y] * A[y * d + yn];
        if (smoothed) f += rho[y] * F[y * d + yn];
      }
      joint[yn] = a;
      filt[yn] = smoothed ? f : a;
    }
    for (std::size_t x = 0; x < nx; ++x) {
      double mass = 0.0, norm = 0.0;
      for (std::size_t yn = 0; yn < d; ++yn) {
        const double lik = obs_.f(x, yn);
        mass += lik * joint[yn];
        post[yn] = lik * filt[yn];
        norm += post[yn];
      }
      if (!(mass > 0.0) || !(norm >= 1e-300)) continue;
      for (std::size_t yn = 0; yn < d; ++yn) post[yn] /= norm;
      visit(wj * mass, std::span<const double>(post.data(), d));
    }
  }
}

}  // namespace popdmp
