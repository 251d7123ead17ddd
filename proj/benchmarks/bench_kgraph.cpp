#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "linkinfer/kgraph.hpp"

namespace {

using namespace linkinfer::kg;

KnowledgeStore random_store(std::size_t n, std::size_t dim) {
  std::mt19937 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  StoreBuilder b(dim, dim);
  std::vector<double> v(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : v) x = g(rng);
    b.add_concept("c" + std::to_string(i), v, v);
  }
  b.set_centrality(std::vector<double>(n, 1.0));
  return std::move(b).build();
}

void BM_TopK(benchmark::State& state) {
  const auto store = random_store(static_cast<std::size_t>(state.range(0)), 100);
  ConceptId seed{0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(store.top_k_similar(Space::cn, seed, 500));
    seed.value = (seed.value + 1) % static_cast<std::uint32_t>(store.size());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_TopK)->RangeMultiplier(4)->Range(1024, 65536)->Complexity()->Unit(benchmark::kMicrosecond);

void BM_Centrality(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto store = random_store(n, 50);
  const auto adjacency = centrality_adjacency(store.space(Space::cn));
  for (auto _ : state) benchmark::DoNotOptimize(eigenvector_centrality(adjacency));
}
BENCHMARK(BM_Centrality)->RangeMultiplier(4)->Range(64, 1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
