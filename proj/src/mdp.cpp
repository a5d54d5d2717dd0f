#include "popdmp/mdp.hpp"

#include "popdmp/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace popdmp {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

double round12(double v) { return std::round(v * 1e12) / 1e12; }

void require_filter_choice(const PopdmpModel& model, const std::optional<RegularizationKernel>& kernel) {
  if (model.hazard_controlled && !kernel)
    throw ConfigError("hazard or jump kernel depends on the action: a regularization kernel is required");
}

}  // namespace

// -- family -----------------------------------------------------------------

void ControlFamily::add(RelaxedControl r, std::string label) {
  candidates.push_back(std::move(r));
  labels.push_back(std::move(label));
}

void ControlFamily::validate(const PopdmpModel& model) const {
  if (candidates.empty()) throw ConfigError("control family is empty");
  if (labels.size() != candidates.size()) throw ConfigError("control family labels out of sync");
  for (const auto& r : candidates) r.check_actions(model.actions);
}

ControlFamily build_family(const std::vector<FamilyEntry>& entries) {
  ControlFamily family;
  for (const auto& e : entries) {
    if (e.kind == FamilyEntry::Kind::constant) {
      family.add(RelaxedControl::constant(e.action), "const(" + num(e.action) + ")");
      continue;
    }
    if (!(e.tau_step > 0.0) || !(e.tau_min > 0.0) || e.tau_max < e.tau_min)
      throw ConfigError("switch family needs 0 < tau_min <= tau_max and tau_step > 0");
    const auto count = static_cast<std::size_t>(std::floor((e.tau_max - e.tau_min) / e.tau_step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
      double tau = round12(e.tau_min + static_cast<double>(i) * e.tau_step);
      family.add(RelaxedControl::switched(e.action, tau, e.after),
                 "switch(" + num(e.action) + "," + num(tau) + "," + num(e.after) + ")");
    }
  }
  return family;
}

std::vector<FamilyEntry> default_family_entries() {
  using K = FamilyEntry::Kind;
  return {
      {K::constant, 0.0, 0.0, 0.1, 2.0, 0.1},
      {K::switched, 1.0, 0.0, 0.1, 2.0, 0.1},
      {K::switched, -1.0, 0.0, 0.1, 2.0, 0.1},
      {K::constant, 1.0, 0.0, 0.1, 2.0, 0.1},
      {K::constant, -1.0, 0.0, 0.1, 2.0, 0.1},
  };
}

StageQuadrature StageQuadrature::for_model(const PopdmpModel& model, double h, double tail_tol) {
  if (!(h > 0.0) || !(tail_tol > 0.0)) throw ConfigError("stage quadrature needs h > 0 and tail_tol > 0");
  const double rate = model.discount + model.hazard_lower;
  const double scale = std::max({model.cost_max, model.hazard_upper, 1e-300});
  double t = std::max(std::log(scale / (rate * tail_tol)) / rate, 2.0 * h);
  double panels = std::ceil(t / (2.0 * h) - 1e-9);
  return StageQuadrature{round12(panels * 2.0 * h), h};
}

// -- stage integrals (direct route) ------------------------------------------

double stage_cost_g(const PopdmpModel& model, std::size_t y, const RelaxedControl& r,
                    const StageQuadrature& quad) {
  auto nodes = simpson_nodes(r, quad.t_max, quad.h);
  auto path = density_path(model, y, r, nodes);
  double total = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    total += nodes[k].weight * path.decay[k] *
             mixture_cost(model, path.positions[k], r.pieces()[nodes[k].piece]);
  return total;
}

double stage_cost_belief(const PopdmpModel& model, const Belief& rho, const RelaxedControl& r,
                         const StageQuadrature& quad) {
  double total = 0.0;
  for (std::size_t y = 0; y < rho.size(); ++y)
    if (rho[y] != 0.0) total += rho[y] * stage_cost_g(model, y, r, quad);
  return total;
}

double expected_next_value(const PopdmpModel& model, const ValueGrid& v, const Belief& rho,
                           const RelaxedControl& r, const std::optional<RegularizationKernel>& kernel,
                           const StageQuadrature& quad) {
  require_filter_choice(model, kernel);
  const auto obs = observation_support(model);
  const auto nodes = simpson_nodes(r, quad.t_max, quad.h);
  double total = 0.0;
  for (const auto& node : nodes) {
    for (const auto& x : obs.points) {
      double mass = 0.0;
      for (std::size_t y = 0; y < rho.size(); ++y)
        if (rho[y] != 0.0) mass += rho[y] * q_tilde_sx(model, node.t, x, y, r);
      if (!(mass > 0.0)) continue;
      Belief next = kernel ? update_regularized(model, rho, r, node.t, x, *kernel)
                           : update(model, rho, r, node.t, x);
      total += node.weight * mass * interpolate(v, next);
    }
  }
  return total;
}

double L_operator(const PopdmpModel& model, const ValueGrid& v, const Belief& rho,
                  const RelaxedControl& r, const std::optional<RegularizationKernel>& kernel,
                  const StageQuadrature& quad) {
  return stage_cost_belief(model, rho, r, quad) + expected_next_value(model, v, rho, r, kernel, quad);
}

TResult argmin_with_ties(std::span<const double> values, double tie_tol) {
  if (values.empty()) throw ConfigError("argmin over an empty family");
  double best = *std::min_element(values.begin(), values.end());
  double threshold = best + tie_tol * std::max(1.0, std::abs(best));
  for (std::size_t k = 0; k < values.size(); ++k)
    if (values[k] <= threshold) return {best, k};
  return {best, 0};
}

TResult T_operator(const PopdmpModel& model, const ValueGrid& v, const Belief& rho,
                   const ControlFamily& family, const std::optional<RegularizationKernel>& kernel,
                   const StageQuadrature& quad, double tie_tol) {
  if (family.size() == 0) throw ConfigError("control family is empty");
  std::vector<double> values(family.size());
  for (std::size_t k = 0; k < family.size(); ++k)
    values[k] = L_operator(model, v, rho, family.candidates[k], kernel, quad);
  return argmin_with_ties(values, tie_tol);
}

// -- tabulated route ----------------------------------------------------------

StageTable::StageTable(const PopdmpModel& model, const RelaxedControl& r, const StageQuadrature& quad,
                       const std::optional<RegularizationKernel>& kernel)
    : d_(model.num_states()) {
  const auto nodes = simpson_nodes(r, quad.t_max, quad.h);
  const std::size_t n = nodes.size();
  weights_.resize(n);
  for (std::size_t k = 0; k < n; ++k) weights_[k] = nodes[k].weight;
  stage_cost_.assign(d_, 0.0);
  density_.assign(n * d_ * d_, 0.0);
  for (std::size_t y = 0; y < d_; ++y) {
    auto path = density_path(model, y, r, nodes);
    for (std::size_t k = 0; k < n; ++k) {
      stage_cost_[y] += nodes[k].weight * path.decay[k] *
                        mixture_cost(model, path.positions[k], r.pieces()[nodes[k].piece]);
      auto row = path.row(k);
      std::copy(row.begin(), row.end(), density_.begin() + static_cast<std::ptrdiff_t>((k * d_ + y) * d_));
    }
  }
  if (!kernel) return;

  smoothed_.assign(n * d_ * d_, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = nodes[k].t;
    auto window = window_nodes(r, std::max(0.0, s - kernel->window()), s + kernel->window(), kernel->step());
    for (std::size_t y = 0; y < d_; ++y) {
      auto path = density_path(model, y, r, window);
      double* out = smoothed_.data() + (k * d_ + y) * d_;
      for (std::size_t u = 0; u < window.size(); ++u) {
        double w = window[u].weight * (*kernel)(s - window[u].t);
        if (w == 0.0) continue;
        auto row = path.row(u);
        for (std::size_t j = 0; j < d_; ++j) out[j] += w * row[j];
      }
    }
  }
}

BeliefOperator::BeliefOperator(const PopdmpModel& model, ControlFamily family, StageQuadrature quad,
                               std::optional<RegularizationKernel> kernel, double tie_tol)
    : model_(&model),
      family_(std::move(family)),
      quad_(quad),
      kernel_(kernel),
      tie_tol_(tie_tol),
      obs_(observation_support(model)) {
  require_filter_choice(model, kernel_);
  family_.validate(model);
  if (model.num_states() > kMaxGridDim) throw ConfigError("at most 16 post-jump states are supported");
  tables_.resize(family_.size());
  const auto count = static_cast<long>(family_.size());
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < count; ++k)
    tables_[static_cast<std::size_t>(k)] =
        StageTable(model, family_.candidates[static_cast<std::size_t>(k)], quad_, kernel_);
}

double BeliefOperator::stage_cost(const Belief& rho, std::size_t k) const {
  double total = 0.0;
  for (std::size_t y = 0; y < rho.size(); ++y) total += rho[y] * tables_[k].stage_cost(y);
  return total;
}

double BeliefOperator::expected_next(const ValueGrid& v, const Belief& rho, std::size_t k) const {
  double total = 0.0;
  for_each_successor(rho.span(), k, [&](double w, std::span<const double> next) {
    total += w * interpolate(v, next);
  });
  return total;
}

double BeliefOperator::L(const ValueGrid& v, const Belief& rho, std::size_t k) const {
  return stage_cost(rho, k) + expected_next(v, rho, k);
}

TResult BeliefOperator::T(const ValueGrid& v, const Belief& rho) const {
  std::vector<double> values(family_.size());
  for (std::size_t k = 0; k < family_.size(); ++k) values[k] = L(v, rho, k);
  return argmin_with_ties(values, tie_tol_);
}

}  // namespace popdmp
