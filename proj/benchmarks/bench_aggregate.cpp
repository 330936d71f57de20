// Micro-benchmarks for the aggregation hot paths: full geometric-median
// descent versus the block-coordinate variant at several block sizes, plus
// the Weiszfeld solver and the quantizer in isolation.
//
// Run: ./bgmd_benchmarks [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <vector>

#include "bgmd/aggregate.hpp"
#include "bgmd/compress.hpp"
#include "bgmd/gm.hpp"
#include "bgmd/rng.hpp"

namespace {

bgmd::GradMatrix random_grads(std::size_t rows, std::size_t cols,
                              std::uint64_t seed) {
  bgmd::RngStream rng(seed, "bench-data");
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = rng.next_normal();
  return bgmd::GradMatrix::unchecked(rows, cols, std::move(data));
}

void BM_AggregateGm(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const bgmd::GradMatrix grads = random_grads(32, d, 7);
  bgmd::AggregatorState agg;
  agg.kind = bgmd::AggregatorKind::kGm;
  bgmd::RngStream rng(11, "bench-sampler");
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgmd::aggregate(agg, grads, 0.1, rng));
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(d));
}
BENCHMARK(BM_AggregateGm)->Arg(1 << 10)->Arg(1 << 13)->Arg(1 << 16)
    ->Unit(benchmark::kMicrosecond)->Complexity(benchmark::oN);

void BM_AggregateBgmd(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const bgmd::GradMatrix grads = random_grads(32, d, 7);
  bgmd::AggregatorState agg;
  agg.kind = bgmd::AggregatorKind::kBgmd;
  agg.k = k;
  agg.reset_memory(d);
  bgmd::RngStream rng(11, "bench-sampler");
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgmd::aggregate(agg, grads, 0.1, rng));
  }
}
BENCHMARK(BM_AggregateBgmd)
    ->Args({1 << 16, 1 << 10})
    ->Args({1 << 16, 1 << 13})
    ->Args({1 << 16, 1 << 16})
    ->Unit(benchmark::kMicrosecond);

void BM_Weiszfeld(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const bgmd::GradMatrix points = random_grads(b, d, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgmd::weiszfeld(points));
  }
}
BENCHMARK(BM_Weiszfeld)
    ->Args({8, 256})
    ->Args({32, 256})
    ->Args({32, 4096})
    ->Unit(benchmark::kMicrosecond);

void BM_Qsgd(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  bgmd::RngStream data(5, "bench-data");
  std::vector<double> values(d);
  for (auto& v : values) v = data.next_normal();
  const bgmd::ParamVector x(std::move(values));
  const bgmd::QuantConfig cfg;
  bgmd::RngStream rng(9, "bench-quant");
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgmd::qsgd(x, cfg, rng));
  }
}
BENCHMARK(BM_Qsgd)->Arg(1 << 10)->Arg(1 << 16)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
