#include <benchmark/benchmark.h>

#include <random>

#include "linkinfer/hlmrf.hpp"

namespace {

using namespace linkinfer::hlmrf;

// A Stage-I shaped problem: `seeds` evidence variables, `targets` free ones,
// a dense layer of implications and a sum cap.
HlMrfProblem stage_like(int seeds, int targets, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  HlMrfProblem p(static_cast<std::size_t>(seeds + targets));
  for (int s = 0; s < seeds; ++s) p.set_evidence(static_cast<VarIndex>(s), u(rng));
  for (int s = 0; s < seeds; ++s)
    for (int t = 0; t < targets; ++t) {
      if (u(rng) < 0.5) continue;
      const VarIndex body[] = {static_cast<VarIndex>(s)};
      const VarIndex head[] = {static_cast<VarIndex>(seeds + t)};
      p.add_term(ground_rule(1.0 + 4.0 * u(rng), body, head));
    }
  LinearConstraint cap{{}, 2.0, ConstraintKind::leq};
  for (int t = 0; t < targets; ++t) cap.coeffs.push_back({static_cast<VarIndex>(seeds + t), 1.0});
  p.add_constraint(std::move(cap));
  return p;
}

void BM_SolveStageLike(benchmark::State& state) {
  const auto p = stage_like(5, static_cast<int>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(solve(p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SolveStageLike)->RangeMultiplier(4)->Range(16, 1024)->Complexity()->Unit(benchmark::kMillisecond);

void BM_Objective(benchmark::State& state) {
  const auto p = stage_like(5, static_cast<int>(state.range(0)), 11);
  std::vector<double> y(p.num_vars(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(objective(p, y));
}
BENCHMARK(BM_Objective)->Range(64, 4096);

}  // namespace

BENCHMARK_MAIN();
