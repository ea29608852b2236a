#include <benchmark/benchmark.h>

#include <random>

#include "driftfuse/fusion.hpp"
#include "driftfuse/qr.hpp"

using namespace driftfuse;

namespace {

Matrix random_matrix(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Matrix w(m, n);
  for (double& v : w.values()) v = n01(rng);
  return w;
}

void BM_QrDecompose(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix w = random_matrix(n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(qr_decompose(w));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_QrDecompose)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNCubed);

void BM_FusionMask(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const LayerStructure s = capture_layer(random_matrix(n, n, 2));
  const Matrix init = random_matrix(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fusion_mask(s, init, FusionConfig{}));
}
BENCHMARK(BM_FusionMask)->RangeMultiplier(2)->Range(16, 256);

}  // namespace
