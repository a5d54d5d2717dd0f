// Serial reference versus OpenMP kernels: Bellman sweeps and Monte Carlo evaluation.

#include "popdmp/mdp.hpp"
#include "popdmp/model.hpp"
#include "popdmp/sim.hpp"
#include "popdmp/solver.hpp"

#include <benchmark/benchmark.h>

#include <map>
#include <memory>
#include <random>

using namespace popdmp;

namespace {

struct Fixture {
  PopdmpModel model = particle_steering();
  std::unique_ptr<BeliefOperator> op;
  std::unique_ptr<CompiledOperator> compiled;
  std::vector<double> v;

  explicit Fixture(std::size_t K) {
    op = std::make_unique<BeliefOperator>(model, build_family(default_family_entries()),
                                          StageQuadrature::for_model(model), std::nullopt);
    compiled = std::make_unique<CompiledOperator>(*op, std::make_shared<SimplexGrid>(3, K));
    v.resize(compiled->num_points());
    std::mt19937_64 rng(1);
    for (auto& x : v) x = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
  }
};

Fixture& fixture(std::size_t K) {
  static std::map<std::size_t, std::unique_ptr<Fixture>> cache;
  auto& slot = cache[K];
  if (!slot) slot = std::make_unique<Fixture>(K);
  return *slot;
}

void BM_SweepSerial(benchmark::State& state) {
  auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(f.v.size());
  std::vector<std::int32_t> arg(f.v.size());
  for (auto _ : state) benchmark::DoNotOptimize(sweep_serial(*f.compiled, f.v, out, arg).residual);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.v.size()));
}

void BM_SweepParallel(benchmark::State& state) {
  auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(f.v.size());
  std::vector<std::int32_t> arg(f.v.size());
  for (auto _ : state) benchmark::DoNotOptimize(sweep_parallel(*f.compiled, f.v, out, arg).residual);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.v.size()));
}

void BM_SweepReference(benchmark::State& state) {
  auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  ValueGrid vg{f.compiled->grid(), f.v, {}};
  std::vector<double> out(f.v.size());
  std::vector<std::int32_t> arg(f.v.size());
  for (auto _ : state) {
    sweep_reference(*f.op, vg, out, arg);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.v.size()));
}

void BM_Compile(benchmark::State& state) {
  auto& f = fixture(4);
  auto grid = std::make_shared<SimplexGrid>(3, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    CompiledOperator c(*f.op, grid);
    benchmark::DoNotOptimize(c.num_points());
  }
}

void mc(benchmark::State& state, bool parallel) {
  auto m = particle_steering();
  auto policy = constant_policy(RelaxedControl::switched(1.0, 0.5));
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_policy_mc(m, scalar_point(-2.0), policy, n, 1, {}, parallel).mean);
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}

void BM_MonteCarloSerial(benchmark::State& state) { mc(state, false); }
void BM_MonteCarloParallel(benchmark::State& state) { mc(state, true); }

}  // namespace

BENCHMARK(BM_SweepSerial)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepParallel)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepReference)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Compile)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloSerial)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(10000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
