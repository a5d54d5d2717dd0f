#include "popdmp/filter.hpp"

#include "popdmp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace popdmp {

namespace {

constexpr double kMinLikelihood = 1e-300;

}  // namespace

// -- Belief -----------------------------------------------------------------

Belief::Belief(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ModelError("belief must have at least one entry");
  double total = 0.0;
  for (double& p : probs_) {
    if (!std::isfinite(p) || p < -1e-12) throw ModelError("belief entries must be nonnegative");
    p = std::max(p, 0.0);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-8)
    throw ModelError("belief sums to " + std::to_string(total) + ", expected 1");
  if (total != 1.0)
    for (double& p : probs_) p /= total;
}

Belief Belief::uniform(std::size_t d) {
  return Belief(std::vector<double>(d, 1.0 / static_cast<double>(d)));
}

Belief Belief::dirac(std::size_t d, std::size_t index) {
  std::vector<double> p(d, 0.0);
  p.at(index) = 1.0;
  return Belief(std::move(p));
}

// -- kernel -----------------------------------------------------------------

double RegularizationKernel::operator()(double t) const {
  const double u = t / sigma;
  switch (kind) {
    case Kind::gaussian:
      return std::exp(-0.5 * u * u) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    case Kind::epanechnikov:
      return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) / sigma : 0.0;
  }
  return 0.0;
}

const char* kernel_name(RegularizationKernel::Kind kind) {
  return kind == RegularizationKernel::Kind::gaussian ? "gaussian" : "epanechnikov";
}

// -- densities --------------------------------------------------------------

ObservationSupport observation_support(const PopdmpModel& model) {
  ObservationSupport support;
  support.num_states = model.num_states();
  for (const auto& y : model.post_jump_states) {
    for (const auto& eps : model.noise.offsets) {
      Point x = y + eps;
      bool seen = std::any_of(support.points.begin(), support.points.end(), [&](const Point& p) {
        return (p - x).cwiseAbs().maxCoeff() <= 1e-9;
      });
      if (!seen) support.points.push_back(x);
    }
  }
  support.likelihood.resize(support.points.size() * support.num_states);
  for (std::size_t i = 0; i < support.points.size(); ++i)
    for (std::size_t j = 0; j < support.num_states; ++j)
      support.likelihood[i * support.num_states + j] =
          model.noise.density_at(support.points[i] - model.post_jump_states[j]);
  return support;
}

std::vector<QuadNode> window_nodes(const RelaxedControl& r, double a, double b, double h) {
  std::vector<QuadNode> nodes;
  for (std::size_t i = 0; i < r.pieces().size(); ++i) {
    double lo = std::max(a, r.piece_start(i));
    double hi = std::min(b, r.piece_end(i));
    if (hi > lo) append_simpson(lo, hi, h, i, nodes);
  }
  return nodes;
}

namespace {

// Adds w * sum_a weight * lambda(z, a) * Q(.|z, a) to out.
void add_jump_row(const PopdmpModel& model, const Point& z, const ActionMixture& m, double w,
                  std::span<double> scratch, std::span<double> out) {
  for (const auto& atom : m.atoms()) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    model.jump_kernel(z, atom.action, scratch);
    double scale = w * atom.weight * model.hazard(z, atom.action);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += scale * scratch[j];
  }
}

}  // namespace

DensityPath density_path(const PopdmpModel& model, std::size_t y, const RelaxedControl& r,
                         const std::vector<QuadNode>& nodes) {
  const std::size_t d = model.num_states();
  const std::size_t n = nodes.size();
  DensityPath path;
  path.num_states = d;
  path.rows.assign(n * d, 0.0);
  path.decay.resize(n);
  if (n == 0) return path;

  const Point& y0 = model.post_jump_states[y];
  auto times = node_times(nodes);
  path.positions = flow_path(model, y0, r, times);

  std::vector<double> lambda_int(n, 0.0);
  if (model.hazard_is_constant()) {
    for (std::size_t k = 0; k < n; ++k) lambda_int[k] = model.hazard_lower * times[k];
  } else {
    std::vector<double> mids;
    for (std::size_t k = 0; k + 1 < n; ++k)
      if (times[k + 1] > times[k]) mids.push_back(0.5 * (times[k] + times[k + 1]));
    auto mid_pos = flow_path(model, y0, r, mids);
    lambda_int[0] = big_lambda(model, y0, r, times[0]);
    std::size_t m = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      double dt = times[k + 1] - times[k];
      if (!(dt > 0.0)) {
        lambda_int[k + 1] = lambda_int[k];
        continue;
      }
      const auto& piece = r.pieces()[nodes[k + 1].piece];
      double f0 = mixture_hazard(model, path.positions[k], piece);
      double fm = mixture_hazard(model, mid_pos[m++], piece);
      double f1 = mixture_hazard(model, path.positions[k + 1], piece);
      lambda_int[k + 1] = lambda_int[k] + dt / 6.0 * (f0 + 4.0 * fm + f1);
    }
  }

  std::vector<double> scratch(d);
  for (std::size_t k = 0; k < n; ++k) {
    double decay = std::exp(-(model.discount * times[k] + lambda_int[k]));
    path.decay[k] = decay;
    add_jump_row(model, path.positions[k], r.pieces()[nodes[k].piece], decay, scratch,
                 std::span<double>(path.rows).subspan(k * d, d));
  }
  return path;
}

double q_tilde(const PopdmpModel& model, double s, std::size_t y_next, const Point& x, std::size_t y,
               const RelaxedControl& r) {
  if (s < 0.0) throw ModelError("q_tilde requires s >= 0");
  double f = model.noise.density_at(x - model.post_jump_states[y_next]);
  if (f == 0.0) return 0.0;
  const Point& y0 = model.post_jump_states[y];
  Point z = flow(model, y0, r, s);
  double decay = std::exp(-gamma(model, y0, r, s));
  std::vector<double> row(model.num_states(), 0.0), scratch(model.num_states());
  add_jump_row(model, z, r.at(s), decay, scratch, row);
  return f * row[y_next];
}

double q_tilde_sx(const PopdmpModel& model, double s, const Point& x, std::size_t y,
                  const RelaxedControl& r) {
  double total = 0.0;
  for (std::size_t j = 0; j < model.num_states(); ++j) total += q_tilde(model, s, j, x, y, r);
  return total;
}

namespace {

Belief normalise_posterior(const PopdmpModel& model, std::vector<double> numer, const Point& x) {
  double total = 0.0;
  for (std::size_t j = 0; j < numer.size(); ++j) {
    numer[j] *= model.noise.density_at(x - model.post_jump_states[j]);
    total += numer[j];
  }
  if (!(total >= kMinLikelihood))
    throw ImpossibleObservation("observation has zero likelihood under the current belief");
  for (double& v : numer) v /= total;
  return Belief(std::move(numer));
}

}  // namespace

Belief update(const PopdmpModel& model, const Belief& rho, const RelaxedControl& r, double s,
              const Point& x) {
  if (s < 0.0) throw ModelError("update requires s >= 0");
  const std::size_t d = model.num_states();
  if (rho.size() != d) throw ModelError("belief size does not match the model");
  std::vector<double> numer(d, 0.0), scratch(d);
  const auto& piece = r.at(s);
  for (std::size_t y = 0; y < d; ++y) {
    if (rho[y] == 0.0) continue;
    const Point& y0 = model.post_jump_states[y];
    Point z = flow(model, y0, r, s);
    double decay = std::exp(-gamma(model, y0, r, s));
    add_jump_row(model, z, piece, rho[y] * decay, scratch, numer);
  }
  return normalise_posterior(model, std::move(numer), x);
}

Belief update_regularized(const PopdmpModel& model, const Belief& rho, const RelaxedControl& r,
                          double s, const Point& x, const RegularizationKernel& kernel) {
  if (s < 0.0) throw ModelError("update_regularized requires s >= 0");
  if (!(kernel.sigma > 0.0)) throw ModelError("regularization bandwidth must be positive");
  const std::size_t d = model.num_states();
  if (rho.size() != d) throw ModelError("belief size does not match the model");
  auto nodes = window_nodes(r, std::max(0.0, s - kernel.window()), s + kernel.window(), kernel.step());
  std::vector<double> numer(d, 0.0);
  for (std::size_t y = 0; y < d; ++y) {
    if (rho[y] == 0.0) continue;
    auto path = density_path(model, y, r, nodes);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      double w = rho[y] * nodes[k].weight * kernel(s - nodes[k].t);
      if (w == 0.0) continue;
      auto row = path.row(k);
      for (std::size_t j = 0; j < d; ++j) numer[j] += w * row[j];
    }
  }
  return normalise_posterior(model, std::move(numer), x);
}

std::vector<Belief> filter_trajectory(const PopdmpModel& model, const Point& x0,
                                      const std::vector<FilterEvent>& events,
                                      const std::optional<RegularizationKernel>& kernel) {
  std::vector<Belief> beliefs;
  beliefs.reserve(events.size() + 1);
  try {
    beliefs.emplace_back(model.initial_belief(x0));
  } catch (const ImpossibleObservation& e) {
    throw ImpossibleObservation(e.what(), 0);
  }
  for (std::size_t n = 0; n < events.size(); ++n) {
    const auto& ev = events[n];
    if (!(ev.s > 0.0)) throw ModelError("event " + std::to_string(n + 1) + " has s <= 0");
    try {
      beliefs.push_back(kernel ? update_regularized(model, beliefs.back(), ev.control, ev.s, ev.x, *kernel)
                               : update(model, beliefs.back(), ev.control, ev.s, ev.x));
    } catch (const ImpossibleObservation& e) {
      throw ImpossibleObservation("event " + std::to_string(n + 1) + ": " + e.what(),
                                  static_cast<long>(n + 1));
    }
  }
  return beliefs;
}

}  // namespace popdmp
