#include <benchmark/benchmark.h>

#include <filesystem>
#include <string>

#include "linkinfer/pipeline.hpp"

namespace {

using namespace linkinfer;
namespace fs = std::filesystem;

struct Suite {
  kg::KnowledgeStore store;
  pipeline::Riddle riddle;
};

Suite load(const std::string& name, const std::string& riddle) {
  const fs::path dir = fs::path(LINKINFER_BENCH_DATA_DIR) / name;
  auto store = kg::KnowledgeStore::load(
      {dir / "cn.txt", dir / "w2v.txt", dir / "assertions.tsv", dir / "concreteness.tsv"});
  auto r = pipeline::ingest_riddle(dir / "riddles" / riddle, store);
  return {std::move(store), std::move(r)};
}

void BM_SolveRiddle(benchmark::State& state, const char* name, const char* riddle, pipeline::Variant variant) {
  const auto s = load(name, riddle);
  const ThetaConfig theta;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::solve_riddle(s.riddle, s.store, theta, variant));
}
BENCHMARK_CAPTURE(BM_SolveRiddle, toy50_gur, "toy50", "fall.json", pipeline::Variant::gur)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SolveRiddle, suite20_gur, "suite20", "s00.json", pipeline::Variant::gur)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SolveRiddle, suite20_bur, "suite20", "s00.json", pipeline::Variant::bur)->Unit(benchmark::kMillisecond);

void BM_Retrieve(benchmark::State& state) {
  const auto s = load("suite20", "s00.json");
  const ThetaConfig theta;
  const auto& img = s.riddle.images[0];
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::rank_targets(img, pipeline::retrieve(img, s.store, theta), theta));
}
BENCHMARK(BM_Retrieve)->Unit(benchmark::kMicrosecond);

void BM_LoadStore(benchmark::State& state) {
  const fs::path dir = fs::path(LINKINFER_BENCH_DATA_DIR) / "suite20";
  for (auto _ : state)
    benchmark::DoNotOptimize(kg::KnowledgeStore::load(
        {dir / "cn.txt", dir / "w2v.txt", dir / "assertions.tsv", dir / "concreteness.tsv"}));
}
BENCHMARK(BM_LoadStore)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
