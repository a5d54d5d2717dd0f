#include "test_support.hpp"

#include "popdmp/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <algorithm>

using namespace popdmp;
using namespace popdmp::testing;

namespace {

struct Moments {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sq += v * v;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double stderr_mean() const {
    double m = mean();
    return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - m * m) / static_cast<double>(n - 1));
  }
};

double chi2_critical_99(std::size_t dof) {
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(dof)), 0.99);
}

// int_0^T e^{beta s} q~SX(s, x | y, r) ds: the undiscounted law of X_1.
double observation_probability(const PopdmpModel& m, const Point& x, std::size_t y, const RelaxedControl& r) {
  auto nodes = simpson_nodes(r, 40.0, 0.005);
  double total = 0.0;
  for (const auto& n : nodes) total += n.weight * std::exp(m.discount * n.t) * q_tilde_sx(m, n.t, x, y, r);
  return total;
}

constexpr std::size_t kN = 100000;

}  // namespace

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    differs_c = differs_c || u != c.uniform();
    differs_d = differs_d || u != d.uniform();
  }
  CHECK(differs_c);
  CHECK(differs_d);
}

TEST_CASE("inter-jump time is Exp(1) for the example") {
  auto m = particle_steering();
  auto r = RelaxedControl::switched(1.0, 0.5);
  std::vector<double> s(kN);
  Moments mean, disc;
  for (std::size_t i = 0; i < kN; ++i) {
    RngStream rng(1, i);
    s[i] = sample_jump(m, m.post_jump_states[i % 3], r, rng).s;
    mean.add(s[i]);
    disc.add(std::exp(-s[i]));
  }
  CHECK(std::abs(mean.mean() - 1.0) < 3.0 * mean.stderr_mean());
  CHECK(std::abs(disc.mean() - 0.5) < 3.0 * disc.stderr_mean());

  std::sort(s.begin(), s.end());
  double D = 0.0;
  for (std::size_t i = 0; i < kN; ++i) {
    double F = 1.0 - std::exp(-s[i]);
    D = std::max({D, std::abs(F - static_cast<double>(i) / kN), std::abs(F - static_cast<double>(i + 1) / kN)});
  }
  CHECK(D * std::sqrt(static_cast<double>(kN)) < kKsCritical1pct);
}

TEST_CASE("thinning with a state-dependent hazard") {
  // lambda(y) = 0.5 + 0.5 tanh(y)^2 along y(t) = t: compare the KS distance to the exact CDF
  auto m = particle_steering();
  m.hazard = [](const Point& y, const Action&) { return 0.5 + 0.5 * std::tanh(y[0]) * std::tanh(y[0]); };
  m.hazard_lower = 0.5;
  m.hazard_upper = 1.0;
  auto r = RelaxedControl::constant(1.0);
  const std::size_t n = 40000;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(5, i);
    s[i] = sample_jump(m, scalar_point(0.0), r, rng).s;
  }
  std::sort(s.begin(), s.end());
  // Lambda(t) = t - 0.5 tanh(t)
  double D = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double F = 1.0 - std::exp(-(s[i] - 0.5 * std::tanh(s[i])));
    D = std::max({D, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
  }
  CHECK(D * std::sqrt(static_cast<double>(n)) < kKsCritical1pct);
}

TEST_CASE("jump from the centre with the stay control") {
  auto m = particle_steering();
  std::map<long, std::size_t> counts;
  for (std::size_t i = 0; i < 30000; ++i) {
    RngStream rng(2, i);
    auto j = sample_jump(m, scalar_point(0.0), RelaxedControl::constant(0.0), rng);
    REQUIRE(j.y_next == 1);
    counts[std::lround(j.x[0])]++;
  }
  REQUIRE(counts.size() == 3);
  double chi2 = 0.0;
  for (auto [x, c] : counts) chi2 += std::pow(static_cast<double>(c) - 10000.0, 2) / 10000.0;
  CHECK(chi2 < chi2_critical_99(2));
}

TEST_CASE("discount mass and observation marginal") {
  auto m = particle_steering();
  auto r = RelaxedControl::constant(1.0);
  auto obs = observation_support(m);
  for (std::size_t y = 0; y < 3; ++y) {
    std::vector<double> expected(obs.points.size());
    for (std::size_t k = 0; k < obs.points.size(); ++k) expected[k] = observation_probability(m, obs.points[k], y, r);
    std::vector<double> counts(obs.points.size(), 0.0);
    Moments disc;
    const std::size_t n = 50000;
    for (std::size_t i = 0; i < n; ++i) {
      RngStream rng(3 + y, i);
      auto j = sample_jump(m, m.post_jump_states[y], r, rng);
      disc.add(std::exp(-m.discount * j.s));
      for (std::size_t k = 0; k < obs.points.size(); ++k)
        if (std::abs(obs.points[k][0] - j.x[0]) < 1e-9) counts[k] += 1.0;
    }
    CHECK(std::abs(disc.mean() - 0.5) < 3.0 * disc.stderr_mean());
    double chi2 = 0.0;
    std::size_t cells = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (expected[k] < 1e-12) {
        CHECK(counts[k] == 0.0);
        continue;
      }
      ++cells;
      double e = expected[k] * n;
      chi2 += (counts[k] - e) * (counts[k] - e) / e;
    }
    CHECK(chi2 < chi2_critical_99(cells - 1));
  }
}

TEST_CASE("belief-weighted discounted observation frequencies match q_tilde_sx") {
  auto m = particle_steering();
  auto r = RelaxedControl::switched(-1.0, 0.8);
  Belief rho({0.5, 0.3, 0.2});
  auto obs = observation_support(m);
  auto nodes = simpson_nodes(r, 30.0, 0.005);
  std::vector<Moments> freq(obs.points.size());
  for (std::size_t i = 0; i < kN; ++i) {
    RngStream rng(8, i);
    std::size_t y = rng.categorical(rho.span());
    auto j = sample_jump(m, m.post_jump_states[y], r, rng);
    for (std::size_t k = 0; k < obs.points.size(); ++k)
      freq[k].add(std::abs(obs.points[k][0] - j.x[0]) < 1e-9 ? std::exp(-j.s) : 0.0);
  }
  for (std::size_t k = 0; k < obs.points.size(); ++k) {
    double expected = 0.0;
    for (const auto& n : nodes)
      for (std::size_t y = 0; y < 3; ++y) expected += n.weight * rho[y] * q_tilde_sx(m, n.t, obs.points[k], y, r);
    CHECK(std::abs(freq[k].mean() - expected) < 3.0 * freq[k].stderr_mean() + 1e-12);
  }
}

TEST_CASE("filter matches conditional frequencies of the hidden state") {
  auto m = particle_steering();
  auto r = RelaxedControl::constant(1.0);
  Belief prior = Belief::uniform(3);
  std::vector<Moments> resid(3);
  for (std::size_t i = 0; i < kN; ++i) {
    RngStream rng(12, i);
    std::size_t y = rng.categorical(prior.span());
    auto j = sample_jump(m, m.post_jump_states[y], r, rng);
    Belief mu = update(m, prior, r, j.s, j.x);
    for (std::size_t k = 0; k < 3; ++k) resid[k].add((j.y_next == k ? 1.0 : 0.0) - mu[k]);
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(resid[k].mean()) < 3.0 * resid[k].stderr_mean() + 1e-12);
}

TEST_CASE("trajectory invariants and reproducibility") {
  auto m = particle_steering();
  auto policy = constant_policy(RelaxedControl::switched(-1.0, 1.3));
  for (std::size_t i = 0; i < 50; ++i) {
    RngStream a(21, i), b(21, i);
    auto ta = simulate_trajectory(m, scalar_point(1.0), policy, a);
    auto tb = simulate_trajectory(m, scalar_point(1.0), policy, b);
    CHECK(ta.times == tb.times);
    CHECK(ta.states == tb.states);
    CHECK(ta.segment_costs == tb.segment_costs);
    CHECK(ta.cost == tb.cost);
    CHECK(ta.truncated);
    for (std::size_t n = 1; n < ta.times.size(); ++n) {
      CHECK(ta.times[n] > ta.times[n - 1]);
      CHECK(m.noise.density_at(ta.observations[n] - m.post_jump_states[ta.states[n]]) > 0.0);
    }
    CHECK(ta.segment_costs.size() == ta.times.size());
  }
  CHECK(10.0 * std::exp(-default_horizon(m)) <= 1e-6 * (1.0 + 1e-12));
}

TEST_CASE("simulated cost examples") {
  auto m = particle_steering();
  auto stay = constant_policy(RelaxedControl::constant(0.0));
  auto zero = zero_cost_model();
  auto est = evaluate_policy_mc(zero, scalar_point(-1.0), constant_policy(RelaxedControl::constant(1.0)), 200, 4);
  CHECK(est.mean == 0.0);
  CHECK(est.std_error == 0.0);

  SimOptions forced;
  forced.forced_start = 1;
  for (std::size_t i = 0; i < 200; ++i) {
    RngStream rng(6, i);
    CHECK(simulate_trajectory(m, scalar_point(1.0), stay, rng, forced).cost == 0.0);
  }

  // Y0 = -2 with a = -1 never leaves the c = 10 plateau; oracle from the filtered MDP.
  forced.forced_start = 0;
  auto left = evaluate_policy_mc(m, scalar_point(-2.0), constant_policy(RelaxedControl::constant(-1.0)), kN, 9, forced);
  auto family = build_family(default_family_entries());
  BeliefOperator op(m, family, StageQuadrature::for_model(m), std::nullopt);
  auto grid = std::make_shared<SimplexGrid>(3, 4);
  CompiledOperator c(op, grid);
  std::vector<std::int32_t> choice(grid->size(), static_cast<std::int32_t>(family_index(family, "const(-1)")));
  auto fixed = evaluate_decision_rule(c, choice, {1e-10, 1000});
  double oracle = interpolate(fixed.values, Belief::dirac(3, 0));
  CHECK(oracle == doctest::Approx(10.0).epsilon(1e-6));
  CHECK(std::abs(left.mean - oracle) < std::max(3.0 * left.std_error, 1e-4));
}

TEST_CASE("evaluate_policy_mc reproducibility") {
  auto m = particle_steering();
  auto policy = constant_policy(RelaxedControl::switched(1.0, 0.5));
  auto one = evaluate_policy_mc(m, scalar_point(-1.0), policy, 1, 77);
  auto again = evaluate_policy_mc(m, scalar_point(-1.0), policy, 1, 77);
  CHECK(one.mean == again.mean);
  auto par = evaluate_policy_mc(m, scalar_point(-1.0), policy, 500, 78, {}, true);
  auto ser = evaluate_policy_mc(m, scalar_point(-1.0), policy, 500, 78, {}, false);
  CHECK(par.mean == ser.mean);
  CHECK(par.std_error == ser.std_error);

  auto absorbed = m;
  absorbed.initial_kernel = dirac_initial_kernel(3, 1);
  auto est = evaluate_policy_mc(absorbed, scalar_point(0.0), constant_policy(RelaxedControl::constant(0.0)), 300, 3);
  CHECK(est.mean == 0.0);
  CHECK(est.std_error == 0.0);
  CHECK_THROWS_AS(evaluate_policy_mc(m, scalar_point(0.0), policy, 0, 1), ConfigError);
}

TEST_CASE("cross_check") {
  const auto& ex = solved_example(20);
  std::vector<Point> x0s = {scalar_point(-2.0), scalar_point(0.0), scalar_point(2.0)};
  CrossCheckOptions opts;
  opts.n_traj = 20000;
  opts.seed = 31;

  std::vector<std::int32_t> stay(ex.grid->size(), 0);
  for (const auto& row : cross_check(*ex.compiled, stay, x0s, opts)) CHECK(std::abs(row.z) < 3.0);

  auto rows = cross_check(*ex.compiled, ex.result.values.argmins, x0s, opts);
  for (const auto& row : rows) CHECK(std::abs(row.z) < 3.0);
  CHECK(rows[1].mc_mean == 0.0);
  CHECK(rows[1].filtered_value == 0.0);

  auto zero = zero_cost_model();
  BeliefOperator op(zero, build_family(default_family_entries()), StageQuadrature::for_model(zero), std::nullopt);
  CompiledOperator c(op, std::make_shared<SimplexGrid>(3, 4));
  std::vector<std::int32_t> choice(c.num_points(), 3);
  opts.n_traj = 500;
  for (const auto& row : cross_check(c, choice, x0s, opts)) {
    CHECK(row.mc_mean == 0.0);
    CHECK(row.filtered_value == 0.0);
    CHECK(row.z == 0.0);
  }
}
