// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "test_support.hpp"

#include "popdmp/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

using namespace popdmp;
using namespace popdmp::testing;

namespace {

constexpr std::size_t kN = 100000;

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

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.require(false, std::string("exception: ") + e.what());
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.note(fmt("%.1fs", secs));
  if (!out.pass) ++failures;
  std::printf("%s %s: %s\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str());
  std::fflush(stdout);
}

RelaxedControl random_control(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(-1.0, 1.0), t(0.05, 2.0), w(0.0, 1.0);
  double t1 = t(rng), t2 = t1 + t(rng);
  double p = w(rng);
  return RelaxedControl({t1, t2}, {ActionMixture({{scalar_point(a(rng)), p}, {scalar_point(a(rng)), 1.0 - p}}),
                                   ActionMixture::dirac(a(rng)), ActionMixture::dirac(a(rng))});
}

double evidence(const PopdmpModel& m, const Belief& rho, const RelaxedControl& r, double s, const Point& x) {
  double z = 0.0;
  for (std::size_t y = 0; y < rho.size(); ++y) z += rho[y] * q_tilde_sx(m, s, x, y, r);
  return z;
}

double ks_exp1(std::vector<double> s) {
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double D = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double F = 1.0 - std::exp(-s[i]);
    D = std::max({D, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
  }
  return D * std::sqrt(n);
}

void mass_identity(Outcome& out) {
  auto m = particle_steering();
  auto obs = observation_support(m);
  double worst = 0.0;
  for (std::size_t y = 0; y < 3; ++y)
    for (const auto& r : {RelaxedControl::constant(0.0), RelaxedControl::constant(1.0),
                          RelaxedControl::switched(-1.0, 0.5)}) {
      double total = 0.0;
      for (const auto& n : simpson_nodes(r, 25.0, 0.005))
        for (const auto& x : obs.points) total += n.weight * q_tilde_sx(m, n.t, x, y, r);
      worst = std::max(worst, std::abs(total - 0.5));
    }
  out.require(worst < 1e-5, "quadrature mass within 1e-5");
  out.note("quadrature |mass-0.5|=" + fmt("%.2e", worst));

  auto r = RelaxedControl::switched(1.0, 0.5);
  Moments disc;
  for (std::size_t i = 0; i < kN; ++i) {
    RngStream rng(1, i);
    disc.add(std::exp(-m.discount * sample_jump(m, m.post_jump_states[i % 3], r, rng).s));
  }
  double z = (disc.mean() - 0.5) / disc.stderr_mean();
  out.require(std::abs(z) < 3.0, "MC E[exp(-beta T1)] within 3 stderr");
  out.note("MC mean=" + fmt("%.5f", disc.mean()) + " z=" + fmt("%.2f", z));
}

void filter_correctness(Outcome& out) {
  auto m = particle_steering();
  Belief b = update(m, Belief::uniform(3), RelaxedControl::constant(1.0), 0.5, scalar_point(2.0));
  out.require(b.probs() == std::vector<double>{0.0, 0.0, 1.0}, "hand example gives (0,0,1) exactly");
  out.note("example -> (" + fmt("%g", b[0]) + "," + fmt("%g", b[1]) + "," + fmt("%g", b[2]) + ")");

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
  double worst = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    double z = resid[k].stderr_mean() > 0.0 ? resid[k].mean() / resid[k].stderr_mean() : 0.0;
    worst = std::max(worst, std::abs(z));
  }
  out.require(worst < 3.0, "conditional frequencies within 3 stderr");
  out.note("max |z|=" + fmt("%.2f", worst));
}

void regularization_convergence(Outcome& out) {
  auto m = particle_steering();
  std::mt19937_64 rng(2024);
  auto obs = observation_support(m);
  struct Probe {
    Belief rho;
    RelaxedControl r;
    double s;
    Point x;
  };
  std::vector<Probe> probes;
  while (probes.size() < 50) {
    Belief rho(random_belief(rng, 3));
    auto r = random_control(rng);
    double s = std::uniform_real_distribution<double>(1.0, 6.0)(rng);
    const auto& x = obs.points[std::uniform_int_distribution<std::size_t>(0, obs.points.size() - 1)(rng)];
    if (evidence(m, rho, r, s, x) > 1e-8) probes.push_back({rho, r, s, x});
  }
  std::vector<double> gaps;
  for (double sigma : {0.2, 0.1, 0.05}) {
    double gap = 0.0;
    for (const auto& p : probes) {
      Belief plain = update(m, p.rho, p.r, p.s, p.x);
      Belief reg = update_regularized(m, p.rho, p.r, p.s, p.x, {RegularizationKernel::Kind::gaussian, sigma});
      for (std::size_t i = 0; i < 3; ++i) gap = std::max(gap, std::abs(reg[i] - plain[i]));
    }
    gaps.push_back(gap);
  }
  for (std::size_t i = 1; i < gaps.size(); ++i)
    out.require(gaps[i] <= 0.7 * gaps[i - 1], "sup-gap ratio <= 0.7");
  out.note("sup-gaps " + fmt("%.3e", gaps[0]) + ", " + fmt("%.3e", gaps[1]) + ", " + fmt("%.3e", gaps[2]));
}

double mirrored_gap(const SimplexGrid& g, const std::vector<double>& v) {
  double gap = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto p = g.point(i);
    int comp[3];
    for (int j = 0; j < 3; ++j) comp[j] = static_cast<int>(std::lround(p[2 - j] * g.subdivisions()));
    gap = std::max(gap, std::abs(v[i] - v[g.index_of(comp)]));
  }
  return gap;
}

void value_iteration_check(Outcome& out) {
  const auto& ex = solved_example(40);
  const auto& rep = ex.result.report;
  out.require(rep.converged && rep.iterations <= 30, "converged within 30 iterations");
  double ratio = 0.0;
  for (std::size_t i = 1; i < rep.residuals.size(); ++i)
    if (rep.residuals[i - 1] > 0.0) ratio = std::max(ratio, rep.residuals[i] / rep.residuals[i - 1]);
  out.require(ratio <= 0.6, "residual ratio <= 0.6");
  out.require(rep.final_residual < 2e-4, "final residual < 2e-4");
  auto [lo, hi] = std::minmax_element(ex.result.values.values.begin(), ex.result.values.values.end());
  out.require(*lo >= 0.0 && *hi <= 10.0, "V in [0, 10]");
  double centre = interpolate(ex.result.values, Belief::dirac(3, 1));
  out.require(centre < 2e-3, "V(0,1,0) < 2e-3");
  double sym = mirrored_gap(*ex.grid, ex.result.values.values);
  out.require(sym < 5e-3, "symmetry gap < 5e-3");
  out.require(ex.seconds < 300.0, "runtime < 5 min");
  out.note("iterations=" + std::to_string(rep.iterations) + " max ratio=" + fmt("%.3f", ratio) +
           " final residual=" + fmt("%.2e", rep.final_residual) + " V in [" + fmt("%.4f", *lo) + ", " +
           fmt("%.4f", *hi) + "] V(centre)=" + fmt("%.2e", centre) + " symmetry gap=" + fmt("%.2e", sym) +
           " solve=" + fmt("%.1fs", ex.seconds));
}

void policy_reproduction(Outcome& out) {
  const auto& ex = solved_example(40);
  const auto& fam = ex.op->family();
  std::size_t checked = 0, bad = 0;
  double tau_lo = 1e9, tau_hi = -1e9;
  for (std::size_t i = 0; i < ex.grid->size(); ++i) {
    auto p = ex.grid->point(i);
    double lean = p[0] - p[2];
    if (std::abs(lean) <= 0.1) continue;
    ++checked;
    const auto& r = fam.candidates[static_cast<std::size_t>(ex.result.values.argmins[i])];
    double a = lean > 0.0 ? 1.0 : -1.0;
    bool ok = r.breakpoints().size() == 1 && r.pieces()[0] == ActionMixture::dirac(a) &&
              r.pieces()[1] == ActionMixture::dirac(0.0) && r.breakpoints()[0] >= 0.4 &&
              r.breakpoints()[0] <= 0.6;
    if (r.breakpoints().size() == 1) {
      tau_lo = std::min(tau_lo, r.breakpoints()[0]);
      tau_hi = std::max(tau_hi, r.breakpoints()[0]);
    }
    if (!ok) ++bad;
  }
  out.require(checked > 0 && bad == 0, "every off-centre grid belief uses switch(+-1, tau in [0.4,0.6], 0)");
  out.note(std::to_string(checked - bad) + "/" + std::to_string(checked) + " beliefs match, tau in [" +
           fmt("%g", tau_lo) + ", " + fmt("%g", tau_hi) + "]");
}

void reduction_equivalence(Outcome& out) {
  const auto& ex = solved_example(40);
  auto policy = extract_policy(ex.result.values, ex.op->family());
  auto bp = as_belief_policy(policy);
  for (double x0 : {-2.0, 0.0, 2.0}) {
    auto est = evaluate_policy_mc(ex.model, scalar_point(x0), bp, kN, 1);
    double v = interpolate(ex.result.values, ex.model.initial_belief(scalar_point(x0)));
    double tol = 3.0 * est.std_error + 0.02;
    out.require(std::abs(est.mean - v) <= tol, "x0=" + fmt("%g", x0) + " within 3 stderr + 0.02");
    out.note("x0=" + fmt("%g", x0) + " MC=" + fmt("%.4f", est.mean) + "+-" + fmt("%.4f", est.std_error) +
             " V=" + fmt("%.4f", v));
  }
}

void degenerate_oracle(Outcome& out) {
  double worst = 0.0;
  for (auto [c, lam, beta] : {std::tuple{2.0, 1.0, 1.0}, std::tuple{3.0, 0.5, 2.0}, std::tuple{1.0, 4.0, 0.5}}) {
    auto m = degenerate_model(c, lam, beta);
    BeliefOperator op(m, build_family({{FamilyEntry::Kind::constant, 0.0}}), StageQuadrature::for_model(m),
                      std::nullopt);
    CompiledOperator co(op, std::make_shared<SimplexGrid>(1, 1));
    auto res = value_iteration(co, {1e-7, 1000});
    worst = std::max(worst, std::abs(res.values.values[0] - c / beta));
  }
  out.require(worst < 1e-4, "V = c/beta within 1e-4");
  out.note("max error=" + fmt("%.2e", worst));
}

void property_suites(Outcome& out) {
  auto m = particle_steering();
  std::mt19937_64 rng(300);
  auto obs = observation_support(m);

  // filter normalization and support
  bool normal = true;
  for (int trial = 0; trial < 200; ++trial) {
    Belief rho(random_belief(rng, 3));
    auto r = random_control(rng);
    double s = std::uniform_real_distribution<double>(0.01, 6.0)(rng);
    const auto& x = obs.points[std::uniform_int_distribution<std::size_t>(0, obs.points.size() - 1)(rng)];
    if (evidence(m, rho, r, s, x) == 0.0) continue;
    Belief b = update(m, rho, r, s, x);
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      normal = normal && b[i] >= 0.0;
      if (m.noise.density_at(x - m.post_jump_states[i]) == 0.0) normal = normal && b[i] == 0.0;
      total += b[i];
    }
    normal = normal && std::abs(total - 1.0) < 1e-10;
  }
  out.require(normal, "filter normalization (1e-10)");

  // g-hat linearity
  auto family = build_family(default_family_entries());
  BeliefOperator op(m, family, StageQuadrature::for_model(m), std::nullopt);
  double lin = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Belief a(random_belief(rng, 3)), b(random_belief(rng, 3));
    double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::vector<double> mix(3);
    for (std::size_t i = 0; i < 3; ++i) mix[i] = alpha * a[i] + (1.0 - alpha) * b[i];
    std::size_t k = std::uniform_int_distribution<std::size_t>(0, family.size() - 1)(rng);
    lin = std::max(lin, std::abs(op.stage_cost(Belief(mix), k) - alpha * op.stage_cost(a, k) -
                                 (1.0 - alpha) * op.stage_cost(b, k)));
  }
  out.require(lin < 1e-12, "g-hat linear in rho (1e-12)");

  // T monotone and a contraction
  auto grid = std::make_shared<SimplexGrid>(3, 8);
  CompiledOperator c(op, grid);
  const double q = m.hazard_upper / (m.discount + m.hazard_lower);
  bool monotone = true, contraction = true;
  std::uniform_real_distribution<double> u(0.0, 10.0), bump(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(grid->size()), w(grid->size()), tv(grid->size()), tw(grid->size());
    double dist = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = u(rng);
      w[i] = trial % 2 ? v[i] + bump(rng) : u(rng);
      dist = std::max(dist, std::abs(v[i] - w[i]));
    }
    sweep_serial(c, v, tv, {});
    sweep_serial(c, w, tw, {});
    double gap = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      gap = std::max(gap, std::abs(tv[i] - tw[i]));
      if (trial % 2) monotone = monotone && tv[i] <= tw[i] + 1e-12;
    }
    contraction = contraction && gap <= q * dist + 1e-12;
  }
  out.require(monotone, "T monotone");
  out.require(contraction, "T contraction modulus 0.5");

  // affine interpolation
  double affine = 0.0;
  for (std::size_t d : {2u, 3u, 5u}) {
    auto g = std::make_shared<SimplexGrid>(d, 6);
    std::vector<double> alpha(d);
    for (auto& a : alpha) a = std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
    ValueGrid vg = ValueGrid::constant(g, 0.0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      auto p = g->point(i);
      for (std::size_t j = 0; j < d; ++j) vg.values[i] += alpha[j] * p[j];
    }
    for (int trial = 0; trial < 100; ++trial) {
      auto rho = random_belief(rng, d);
      double exact = 0.0;
      for (std::size_t j = 0; j < d; ++j) exact += alpha[j] * rho[j];
      affine = std::max(affine, std::abs(interpolate(vg, rho) - exact));
    }
  }
  out.require(affine < 1e-12, "affine interpolation exact (1e-12)");

  // simulator KS and chi-square
  std::vector<double> s(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    RngStream r(1, i);
    s[i] = sample_jump(m, m.post_jump_states[i % 3], RelaxedControl::switched(1.0, 0.5), r).s;
  }
  double ks = ks_exp1(std::move(s));
  out.require(ks < kKsCritical1pct, "KS Exp(1) at 1%");
  std::map<long, double> counts;
  const std::size_t n = 30000;
  for (std::size_t i = 0; i < n; ++i) {
    RngStream r(2, i);
    counts[std::lround(sample_jump(m, scalar_point(0.0), RelaxedControl::constant(0.0), r).x[0])] += 1.0;
  }
  double chi2 = 0.0;
  for (auto [x, cnt] : counts) chi2 += (cnt - n / 3.0) * (cnt - n / 3.0) / (n / 3.0);
  double crit = boost::math::quantile(boost::math::chi_squared(2.0), 0.99);
  out.require(counts.size() == 3 && chi2 < crit, "chi-square observation noise at 1%");
  out.note("KS stat=" + fmt("%.3f", ks) + " chi2=" + fmt("%.2f", chi2) + " (crit " + fmt("%.2f", crit) + ")");
}

}  // namespace

int main() {
  criterion("mass identity", mass_identity);
  criterion("filter correctness", filter_correctness);
  criterion("regularization convergence", regularization_convergence);
  criterion("value iteration", value_iteration_check);
  criterion("optimal policy", policy_reproduction);
  criterion("reduction equivalence", reduction_equivalence);
  criterion("degenerate oracle", degenerate_oracle);
  criterion("property suites", property_suites);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
