#include "popdmp/model.hpp"

#include "popdmp/error.hpp"
#include "popdmp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace popdmp {

namespace {

constexpr double kNormTol = 1e-12;
constexpr double kOffsetMatchTol = 1e-9;

bool all_finite(const Point& p) { return p.allFinite(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

std::string fmt(const Point& p) {
  if (p.size() == 1) return fmt(p[0]);
  std::string s = "(";
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (i) s += ",";
    s += fmt(p[i]);
  }
  return s + ")";
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace

Point scalar_point(double v) {
  Point p(1);
  p[0] = v;
  return p;
}

Point make_point(std::initializer_list<double> coords) {
  Point p(static_cast<Eigen::Index>(coords.size()));
  Eigen::Index i = 0;
  for (double c : coords) p[i++] = c;
  return p;
}

bool ActionBox::contains(const Action& a) const {
  if (a.size() != lower.size()) return false;
  return (a.array() >= lower.array()).all() && (a.array() <= upper.array()).all();
}

// -- ActionMixture ----------------------------------------------------------

ActionMixture::ActionMixture(std::vector<ActionAtom> atoms) : atoms_(std::move(atoms)) {
  if (atoms_.empty()) throw ModelError("action mixture has no atoms");
  double total = 0.0;
  for (const auto& atom : atoms_) {
    if (!(atom.weight >= 0.0) || !std::isfinite(atom.weight))
      throw ModelError("action mixture weight must be finite and nonnegative");
    if (!all_finite(atom.action)) throw ModelError("action mixture atom is not finite");
    total += atom.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ModelError("action mixture weights sum to " + fmt(total) + ", expected 1");
}

ActionMixture ActionMixture::dirac(Action a) { return ActionMixture({{std::move(a), 1.0}}); }

ActionMixture ActionMixture::dirac(double a) { return dirac(scalar_point(a)); }

Action ActionMixture::mean() const {
  Action m = Action::Zero(atoms_.front().action.size());
  for (const auto& atom : atoms_) m += atom.weight * atom.action;
  return m;
}

bool operator==(const ActionMixture& lhs, const ActionMixture& rhs) {
  if (lhs.atoms_.size() != rhs.atoms_.size()) return false;
  for (std::size_t i = 0; i < lhs.atoms_.size(); ++i) {
    const auto& a = lhs.atoms_[i];
    const auto& b = rhs.atoms_[i];
    if (a.weight != b.weight || a.action.size() != b.action.size() || a.action != b.action)
      return false;
  }
  return true;
}

// -- RelaxedControl ---------------------------------------------------------

RelaxedControl::RelaxedControl(std::vector<double> breakpoints, std::vector<ActionMixture> pieces)
    : breakpoints_(std::move(breakpoints)), pieces_(std::move(pieces)) {
  if (pieces_.size() != breakpoints_.size() + 1)
    throw ModelError("relaxed control with " + std::to_string(breakpoints_.size()) +
                     " breakpoints needs " + std::to_string(breakpoints_.size() + 1) + " pieces");
  double prev = 0.0;
  for (double b : breakpoints_) {
    if (!std::isfinite(b) || !(b > prev))
      throw ModelError("relaxed control breakpoints must be finite and strictly increasing from 0");
    prev = b;
  }
}

RelaxedControl RelaxedControl::constant(ActionMixture m) { return RelaxedControl({}, {std::move(m)}); }

RelaxedControl RelaxedControl::constant(double a) { return constant(ActionMixture::dirac(a)); }

RelaxedControl RelaxedControl::switched(double a, double tau, double after) {
  return RelaxedControl({tau}, {ActionMixture::dirac(a), ActionMixture::dirac(after)});
}

std::size_t RelaxedControl::piece_index(double t) const {
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  return static_cast<std::size_t>(it - breakpoints_.begin());
}

void RelaxedControl::check_actions(const ActionBox& box) const {
  for (const auto& piece : pieces_)
    for (const auto& atom : piece.atoms())
      if (!box.contains(atom.action))
        throw ModelError("action " + fmt(atom.action) + " lies outside the action set");
}

bool operator==(const RelaxedControl& lhs, const RelaxedControl& rhs) {
  return lhs.breakpoints_ == rhs.breakpoints_ && lhs.pieces_ == rhs.pieces_;
}

std::string describe(const ActionMixture& m) {
  std::string s;
  for (std::size_t i = 0; i < m.atoms().size(); ++i) {
    const auto& atom = m.atoms()[i];
    if (i) s += "+";
    s += fmt(atom.action);
    if (m.atoms().size() > 1) s += "*" + fmt(atom.weight);
  }
  return s;
}

std::string describe(const RelaxedControl& r) {
  std::string s;
  for (std::size_t i = 0; i < r.pieces().size(); ++i) {
    if (i) s += ";";
    s += describe(r.pieces()[i]);
    if (i < r.breakpoints().size()) s += "@" + fmt(r.breakpoints()[i]);
  }
  return s;
}

// -- NoiseModel -------------------------------------------------------------

double NoiseModel::density_at(const Point& eps) const {
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    if (offsets[i].size() == eps.size() &&
        (offsets[i] - eps).cwiseAbs().maxCoeff() <= kOffsetMatchTol)
      return density[i];
  }
  return 0.0;
}

void NoiseModel::validate() const {
  if (offsets.empty()) throw ModelError("noise model has no offsets");
  if (offsets.size() != density.size())
    throw ModelError("noise model needs one density value per offset");
  double total = 0.0;
  for (double f : density) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ModelError("noise density must be nonnegative");
    total += f;
  }
  if (std::abs(total - 1.0) > kNormTol)
    throw ModelError("noise density sums to " + fmt(total) + ", expected 1");
  for (std::size_t i = 0; i < offsets.size(); ++i)
    for (std::size_t j = i + 1; j < offsets.size(); ++j)
      if ((offsets[i] - offsets[j]).cwiseAbs().maxCoeff() <= kOffsetMatchTol)
        throw ModelError("noise offsets must be distinct");
}

// -- PopdmpModel ------------------------------------------------------------

long PopdmpModel::state_index(const Point& y) const {
  for (std::size_t i = 0; i < post_jump_states.size(); ++i)
    if (post_jump_states[i].size() == y.size() &&
        (post_jump_states[i] - y).cwiseAbs().maxCoeff() <= kOffsetMatchTol)
      return static_cast<long>(i);
  return -1;
}

std::vector<double> PopdmpModel::initial_belief(const Point& x) const {
  std::vector<double> out(num_states(), 0.0);
  initial_kernel(x, out);
  return out;
}

void PopdmpModel::validate() const {
  const std::size_t d = num_states();
  if (d == 0) throw ModelError("post-jump state set is empty");
  const auto dim_states = post_jump_states.front().size();
  for (const auto& y : post_jump_states) {
    if (y.size() != dim_states) throw ModelError("post-jump states have mixed dimensions");
    if (!all_finite(y)) throw ModelError("post-jump state is not finite");
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      if ((post_jump_states[i] - post_jump_states[j]).cwiseAbs().maxCoeff() <= kOffsetMatchTol)
        throw ModelError("post-jump states must be distinct");
  noise.validate();
  for (const auto& eps : noise.offsets)
    if (eps.size() != dim_states) throw ModelError("noise offsets must match the state dimension");
  if (actions.lower.size() == 0 || actions.lower.size() != actions.upper.size() ||
      !(actions.lower.array() <= actions.upper.array()).all())
    throw ModelError("action box bounds are malformed");
  if (!(discount > 0.0) || !std::isfinite(discount)) throw ModelError("discount must be positive");
  if (!(hazard_lower > 0.0) || !(hazard_upper >= hazard_lower) || !std::isfinite(hazard_upper))
    throw ModelError("hazard bounds must satisfy 0 < lower <= upper < inf");
  if (!(cost_max >= 0.0) || !std::isfinite(cost_max)) throw ModelError("cost bound must be finite");
  if (!(h_ode > 0.0) || !(h_quad > 0.0)) throw ModelError("step sizes must be positive");
  if (!hazard || !jump_kernel || !cost_rate || !initial_kernel)
    throw ModelError("model is missing a hazard, kernel, cost or initial kernel");

  std::vector<Point> ys;
  if (dim_states == 1) {
    double lo = post_jump_states.front()[0], hi = lo;
    for (const auto& y : post_jump_states) {
      lo = std::min(lo, y[0]);
      hi = std::max(hi, y[0]);
    }
    for (double v : linspace(lo - 3.0, hi + 3.0, 241)) ys.push_back(scalar_point(v));
  }
  for (const auto& y : post_jump_states) {
    ys.push_back(y);
    for (const auto& eps : noise.offsets) ys.push_back(y + eps);
  }

  std::vector<Action> as;
  if (actions.lower.size() == 1) {
    for (double v : linspace(actions.lower[0], actions.upper[0], 11)) as.push_back(scalar_point(v));
  } else {
    as.push_back(actions.lower);
    as.push_back(actions.upper);
    as.push_back(0.5 * (actions.lower + actions.upper));
  }

  std::vector<double> row(d);
  for (const auto& y : ys) {
    for (const auto& a : as) {
      double lam = hazard(y, a);
      if (!std::isfinite(lam) || lam < hazard_lower - kNormTol || lam > hazard_upper + kNormTol)
        throw ModelError("hazard " + fmt(lam) + " at y=" + fmt(y) + " violates its declared bounds");
      double c = cost_rate(y, a);
      if (!std::isfinite(c) || c < 0.0 || c > cost_max + kNormTol)
        throw ModelError("cost " + fmt(c) + " at y=" + fmt(y) + " violates [0, c_max]");
      std::fill(row.begin(), row.end(), 0.0);
      jump_kernel(y, a, row);
      double total = 0.0;
      for (double q : row) {
        if (!(q >= -kNormTol) || !std::isfinite(q))
          throw ModelError("jump kernel has a negative entry at y=" + fmt(y));
        total += q;
      }
      if (std::abs(total - 1.0) > kNormTol)
        throw ModelError("jump kernel row at y=" + fmt(y) + " sums to " + fmt(total) + ", expected 1");
    }
  }
  for (const auto& y : post_jump_states) {
    for (const auto& eps : noise.offsets) {
      auto q0 = initial_belief(y + eps);
      double total = std::accumulate(q0.begin(), q0.end(), 0.0);
      if (std::abs(total - 1.0) > kNormTol)
        throw ModelError("initial kernel at x=" + fmt(Point(y + eps)) + " sums to " + fmt(total));
    }
  }
}

// -- tables -----------------------------------------------------------------

PiecewiseLinear::PiecewiseLinear(std::vector<double> breakpoints, std::vector<double> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
  if (breakpoints_.empty() || breakpoints_.size() != values_.size())
    throw ModelError("piecewise-linear table needs one value per breakpoint");
  for (std::size_t i = 1; i < breakpoints_.size(); ++i)
    if (!(breakpoints_[i] > breakpoints_[i - 1]))
      throw ModelError("piecewise-linear breakpoints must be strictly increasing");
  for (double v : values_)
    if (!std::isfinite(v)) throw ModelError("piecewise-linear value is not finite");
}

double PiecewiseLinear::operator()(double y) const {
  if (y <= breakpoints_.front()) return values_.front();
  if (y >= breakpoints_.back()) return values_.back();
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), y);
  std::size_t hi = static_cast<std::size_t>(it - breakpoints_.begin());
  std::size_t lo = hi - 1;
  double u = (y - breakpoints_[lo]) / (breakpoints_[hi] - breakpoints_[lo]);
  return (1.0 - u) * values_[lo] + u * values_[hi];
}

double PiecewiseLinear::max_value() const { return *std::max_element(values_.begin(), values_.end()); }
double PiecewiseLinear::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

PiecewiseLinearRows::PiecewiseLinearRows(std::vector<double> breakpoints,
                                         std::vector<std::vector<double>> rows)
    : breakpoints_(std::move(breakpoints)), rows_(std::move(rows)) {
  if (breakpoints_.empty() || breakpoints_.size() != rows_.size())
    throw ModelError("kernel table needs one row per breakpoint");
  for (std::size_t i = 1; i < breakpoints_.size(); ++i)
    if (!(breakpoints_[i] > breakpoints_[i - 1]))
      throw ModelError("kernel breakpoints must be strictly increasing");
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() != rows_.front().size()) throw ModelError("kernel rows have mixed lengths");
    double total = 0.0;
    for (double q : rows_[i]) {
      if (!(q >= 0.0) || !std::isfinite(q))
        throw ModelError("kernel row " + std::to_string(i) + " has a negative entry");
      total += q;
    }
    if (std::abs(total - 1.0) > kNormTol)
      throw ModelError("kernel row " + std::to_string(i) + " sums to " + fmt(total) + ", expected 1");
  }
}

void PiecewiseLinearRows::operator()(double y, std::span<double> out) const {
  const std::size_t d = rows_.front().size();
  if (y <= breakpoints_.front()) {
    std::copy(rows_.front().begin(), rows_.front().end(), out.begin());
    return;
  }
  if (y >= breakpoints_.back()) {
    std::copy(rows_.back().begin(), rows_.back().end(), out.begin());
    return;
  }
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), y);
  std::size_t hi = static_cast<std::size_t>(it - breakpoints_.begin());
  std::size_t lo = hi - 1;
  double u = (y - breakpoints_[lo]) / (breakpoints_[hi] - breakpoints_[lo]);
  for (std::size_t k = 0; k < d; ++k) out[k] = (1.0 - u) * rows_[lo][k] + u * rows_[hi][k];
}

// -- built-ins --------------------------------------------------------------

ClosedFormFlow action_velocity_flow() {
  return [](const Point& y, const RelaxedControl& r, double t) -> Point {
    Point z = y;
    for (std::size_t i = 0; i < r.pieces().size(); ++i) {
      double a = r.piece_start(i);
      if (a >= t) break;
      double b = std::min(r.piece_end(i), t);
      z += (b - a) * r.pieces()[i].mean();
    }
    return z;
  };
}

InitialKernel bayes_initial_kernel(std::vector<Point> states, NoiseModel noise) {
  return [states = std::move(states), noise = std::move(noise)](const Point& x, std::span<double> out) {
    double total = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      out[i] = noise.density_at(x - states[i]);
      total += out[i];
    }
    if (!(total > 0.0))
      throw ImpossibleObservation("initial observation " + fmt(x) + " has zero likelihood");
    for (std::size_t i = 0; i < states.size(); ++i) out[i] /= total;
  };
}

InitialKernel uniform_initial_kernel(std::size_t d) {
  return [d](const Point&, std::span<double> out) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(d), 1.0 / static_cast<double>(d));
  };
}

InitialKernel dirac_initial_kernel(std::size_t d, std::size_t index) {
  if (index >= d) throw ModelError("initial Dirac index out of range");
  return [d, index](const Point&, std::span<double> out) {
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
    out[index] = 1.0;
  };
}

PopdmpModel particle_steering() {
  PopdmpModel m;
  m.post_jump_states = {scalar_point(-2.0), scalar_point(0.0), scalar_point(2.0)};
  m.actions = {scalar_point(-1.0), scalar_point(1.0)};
  m.drift = action_velocity_flow();
  m.hazard = [](const Point&, const Action&) { return 1.0; };
  m.hazard_lower = 1.0;
  m.hazard_upper = 1.0;
  PiecewiseLinearRows kernel({-2.0, -1.5, 1.5, 2.0},
                             {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
  m.jump_kernel = [kernel](const Point& y, const Action&, std::span<double> out) { kernel(y[0], out); };
  m.noise.offsets = {scalar_point(-1.0), scalar_point(0.0), scalar_point(1.0)};
  m.noise.density = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  PiecewiseLinear cost({-2.0, -1.5, 1.5, 2.0}, {10.0, 0.0, 0.0, 10.0});
  m.cost_rate = [cost](const Point& y, const Action&) { return cost(y[0]); };
  m.cost_max = 10.0;
  m.discount = 1.0;
  m.initial_kernel = bayes_initial_kernel(m.post_jump_states, m.noise);
  m.hazard_controlled = false;
  return m;
}

// -- dynamics ---------------------------------------------------------------

Point mixture_velocity(const VectorField& field, const Point& y, const ActionMixture& m) {
  Point v = Point::Zero(y.size());
  for (const auto& atom : m.atoms()) v += atom.weight * field(y, atom.action);
  return v;
}

double mixture_hazard(const PopdmpModel& model, const Point& y, const ActionMixture& m) {
  double total = 0.0;
  for (const auto& atom : m.atoms()) total += atom.weight * model.hazard(y, atom.action);
  return total;
}

double mixture_cost(const PopdmpModel& model, const Point& y, const ActionMixture& m) {
  double total = 0.0;
  for (const auto& atom : m.atoms()) total += atom.weight * model.cost_rate(y, atom.action);
  return total;
}

namespace {

// Classical RK4 from t0 to t1 within a single control piece.
Point rk4_advance(const VectorField& field, const ActionMixture& m, Point y, double t0, double t1,
                  double h) {
  if (!(t1 > t0)) return y;
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((t1 - t0) / h - 1e-9)));
  const double step = (t1 - t0) / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    Point k1 = mixture_velocity(field, y, m);
    Point k2 = mixture_velocity(field, y + 0.5 * step * k1, m);
    Point k3 = mixture_velocity(field, y + 0.5 * step * k2, m);
    Point k4 = mixture_velocity(field, y + step * k3, m);
    y += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!all_finite(y)) throw IntegrationDiverged("flow integration produced a non-finite state");
  }
  return y;
}

// Advances (t, y) to `target`, restarting the integrator at each control breakpoint.
Point advance(const VectorField& field, const RelaxedControl& r, Point y, double t, double target,
              double h) {
  while (t < target) {
    std::size_t i = r.piece_index(t);
    double end = std::min(r.piece_end(i), target);
    y = rk4_advance(field, r.pieces()[i], std::move(y), t, end, h);
    t = end;
  }
  return y;
}

}  // namespace

Point flow(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t) {
  if (t < 0.0) throw ModelError("flow requires t >= 0");
  if (t == 0.0) return y;
  if (const auto* closed = std::get_if<ClosedFormFlow>(&model.drift)) {
    Point z = (*closed)(y, r, t);
    if (!all_finite(z)) throw IntegrationDiverged("closed-form flow returned a non-finite state");
    return z;
  }
  return advance(std::get<VectorField>(model.drift), r, y, 0.0, t, model.h_ode);
}

std::vector<Point> flow_path(const PopdmpModel& model, const Point& y, const RelaxedControl& r,
                             std::span<const double> times) {
  std::vector<Point> out;
  out.reserve(times.size());
  if (const auto* closed = std::get_if<ClosedFormFlow>(&model.drift)) {
    for (double t : times) out.push_back(t == 0.0 ? y : (*closed)(y, r, t));
    for (const auto& z : out)
      if (!all_finite(z)) throw IntegrationDiverged("closed-form flow returned a non-finite state");
    return out;
  }
  const auto& field = std::get<VectorField>(model.drift);
  Point cur = y;
  double t = 0.0;
  for (double target : times) {
    if (target < t) throw ModelError("flow_path requires ascending times");
    cur = advance(field, r, std::move(cur), t, target, model.h_ode);
    t = target;
    out.push_back(cur);
  }
  return out;
}

double big_lambda(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t) {
  if (t < 0.0) throw ModelError("big_lambda requires t >= 0");
  if (t == 0.0) return 0.0;
  if (model.hazard_is_constant()) return model.hazard_lower * t;
  auto nodes = simpson_nodes(r, t, model.h_quad);
  auto times = node_times(nodes);
  auto path = flow_path(model, y, r, times);
  double total = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    total += nodes[k].weight * mixture_hazard(model, path[k], r.pieces()[nodes[k].piece]);
  return std::clamp(total, model.hazard_lower * t, model.hazard_upper * t);
}

double gamma(const PopdmpModel& model, const Point& y, const RelaxedControl& r, double t) {
  return model.discount * t + big_lambda(model, y, r, t);
}

// -- policies ---------------------------------------------------------------

RelaxedControl relaxed_control_from(const PiecewisePolicy& p, const History& h,
                                    std::span<const double> probes) {
  std::vector<double> times(probes.begin(), probes.end());
  std::sort(times.begin(), times.end());
  if (times.empty() || times.front() > 0.0) times.insert(times.begin(), 0.0);
  std::vector<double> breakpoints;
  std::vector<ActionMixture> pieces{p(h, times.front())};
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] == times[i - 1]) continue;
    ActionMixture m = p(h, times[i]);
    if (!(m == pieces.back())) {
      breakpoints.push_back(times[i]);
      pieces.push_back(std::move(m));
    }
  }
  return RelaxedControl(std::move(breakpoints), std::move(pieces));
}

CorrespondenceResult correspondence_roundtrip(const PiecewisePolicy& p, double horizon,
                                              std::vector<double> probes, const History& h) {
  std::erase_if(probes, [horizon](double t) { return t < 0.0 || t > horizon; });
  CorrespondenceResult result;
  result.discrete = [p, probes](const History& hist) { return relaxed_control_from(p, hist, probes); };
  result.piecewise = [discrete = result.discrete](const History& hist, double t) {
    return discrete(hist).at(t);
  };
  RelaxedControl r = result.discrete(h);
  for (double t : probes)
    if (!(r.at(t) == p(h, t))) ++result.mismatches;
  return result;
}

}  // namespace popdmp
