// Parallel kernels against their serial references.
#include <benchmark/benchmark.h>

#include "carl/kmeans.hpp"
#include "carl/nn.hpp"
#include "carl/rng.hpp"
#include "carl/rollout.hpp"

namespace {

carl::RolloutConfig bench_rollout() {
  carl::RolloutConfig r;
  r.horizon_steps = 1500;
  r.warmup_steps = 500;
  r.perturbation_start = 500;
  r.perturbation_end = 1500;
  return r;
}

carl::Matrix random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  carl::Rng rng(seed);
  carl::Matrix m(n, std::vector<double>(d));
  for (auto& row : m)
    for (auto& v : row) v = rng.normal();
  return m;
}

carl::Batch random_batch(std::size_t n) {
  carl::Batch b;
  b.x = random_rows(n, 24, 1);
  carl::Rng rng(2);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> y(6, 0.0);
    y[rng.index(6)] = 1.0;
    b.y.push_back(y);
  }
  return b;
}

void BM_RolloutsParallel(benchmark::State& state) {
  const auto cfg = bench_rollout();
  carl::RolloutContext ctx;
  ctx.record_log = true;
  for (auto _ : state) benchmark::DoNotOptimize(carl::run_rollouts(cfg, ctx, static_cast<int>(state.range(0))));
}

void BM_RolloutsSerial(benchmark::State& state) {
  const auto cfg = bench_rollout();
  carl::RolloutContext ctx;
  for (auto _ : state)
    benchmark::DoNotOptimize(carl::run_rollouts_serial(cfg, ctx, static_cast<int>(state.range(0))));
}

void BM_ForwardBatch(benchmark::State& state) {
  const carl::Mlp m({24, 32, 16, 16, 6}, carl::OutputActivation::Softmax, 3);
  const auto xs = random_rows(static_cast<std::size_t>(state.range(0)), 24, 4);
  for (auto _ : state) benchmark::DoNotOptimize(carl::forward_batch(m, xs));
}

void BM_ForwardBatchSerial(benchmark::State& state) {
  const carl::Mlp m({24, 32, 16, 16, 6}, carl::OutputActivation::Softmax, 3);
  const auto xs = random_rows(static_cast<std::size_t>(state.range(0)), 24, 4);
  for (auto _ : state) benchmark::DoNotOptimize(carl::forward_batch_serial(m, xs));
}

void BM_Grad(benchmark::State& state) {
  const carl::Mlp m({24, 32, 16, 16, 6}, carl::OutputActivation::Softmax, 3);
  const auto b = random_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(carl::grad(m, b, carl::LossKind::CrossEntropy));
}

void BM_GradSerial(benchmark::State& state) {
  const carl::Mlp m({24, 32, 16, 16, 6}, carl::OutputActivation::Softmax, 3);
  const auto b = random_batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(carl::grad_serial(m, b, carl::LossKind::CrossEntropy));
}

void BM_Assign(benchmark::State& state) {
  const auto data = random_rows(static_cast<std::size_t>(state.range(0)), 8, 5);
  const auto centroids = random_rows(16, 8, 6);
  std::vector<int> out;
  for (auto _ : state) benchmark::DoNotOptimize(carl::assign_clusters(data, centroids, out));
}

void BM_AssignSerial(benchmark::State& state) {
  const auto data = random_rows(static_cast<std::size_t>(state.range(0)), 8, 5);
  const auto centroids = random_rows(16, 8, 6);
  std::vector<int> out;
  for (auto _ : state) benchmark::DoNotOptimize(carl::assign_clusters_serial(data, centroids, out));
}

}  // namespace

BENCHMARK(BM_RolloutsParallel)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutsSerial)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardBatch)->Arg(4096);
BENCHMARK(BM_ForwardBatchSerial)->Arg(4096);
BENCHMARK(BM_Grad)->Arg(4096);
BENCHMARK(BM_GradSerial)->Arg(4096);
BENCHMARK(BM_Assign)->Arg(20000);
BENCHMARK(BM_AssignSerial)->Arg(20000);

BENCHMARK_MAIN();
