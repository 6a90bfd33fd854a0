// Serial reference kernels against their OpenMP counterparts, plus one
// single-block forward pass.

#include <benchmark/benchmark.h>

#include "lst/kernels.hpp"
#include "lst/layers.hpp"
#include "lst/network.hpp"
#include "lst/synthdata.hpp"

namespace {

lst::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  lst::Rng rng(seed);
  return lst::gaussian(r, c, 1.0, rng);
}

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 64, 1), b = random_matrix(64, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(lst::kernels::serial::matmul(a, b));
}

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 64, 1), b = random_matrix(64, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(lst::kernels::matmul(a, b));
}

void BM_SoftmaxColsSerial(benchmark::State& state) {
  const auto a = random_matrix(64, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(lst::kernels::serial::softmax_cols(a));
}

void BM_SoftmaxColsParallel(benchmark::State& state) {
  const auto a = random_matrix(64, static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) benchmark::DoNotOptimize(lst::kernels::softmax_cols(a));
}

std::vector<lst::Vec3> random_points(std::size_t n) {
  lst::Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::vector<lst::Vec3> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

void BM_KnnSerial(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(lst::kernels::serial::knn(pts, 16));
}

void BM_KnnParallel(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(lst::kernels::knn(pts, 16));
}

void BM_BlockForward(benchmark::State& state) {
  lst::synth::SceneSpec spec;
  spec.n_points = static_cast<std::size_t>(state.range(0));
  lst::Block block{lst::synth::generate_scene(spec), {10.0, 10.0, 0.0}, {}};
  const lst::net::NetConfig config;
  const auto params = lst::net::init_params(config, 5);
  const auto input = lst::net::prepare_block(block, config.k_local);
  for (auto _ : state) benchmark::DoNotOptimize(lst::net::predict(input, params, config, {}));
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->Arg(512)->Arg(2048);
BENCHMARK(BM_MatmulParallel)->Arg(512)->Arg(2048);
BENCHMARK(BM_SoftmaxColsSerial)->Arg(2048)->Arg(8192);
BENCHMARK(BM_SoftmaxColsParallel)->Arg(2048)->Arg(8192);
BENCHMARK(BM_KnnSerial)->Arg(2048);
BENCHMARK(BM_KnnParallel)->Arg(2048);
BENCHMARK(BM_BlockForward)->Arg(2048)->Arg(4096)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
