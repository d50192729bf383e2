// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "ddit/rng.hpp"
#include "ddit/tensor.hpp"

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ddit::Rng rng(1);
  const ddit::Tensor a = ddit::Tensor::randn({n, n}, rng);
  const ddit::Tensor b = ddit::Tensor::randn({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ddit::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ddit::Rng rng(2);
  const ddit::Tensor a = ddit::Tensor::randn({n, n}, rng).as_leaf(true);
  const ddit::Tensor b = ddit::Tensor::randn({n, n}, rng).as_leaf(true);
  for (auto _ : state) benchmark::DoNotOptimize(ddit::backward(ddit::sum(ddit::matmul(a, b))));
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 256);

void BM_LayerNorm(benchmark::State& state) {
  ddit::Rng rng(3);
  const ddit::Tensor x = ddit::Tensor::randn({128, 64}, rng);
  const ddit::Tensor gain = ddit::Tensor::from({64}, std::vector<double>(64, 1.0));
  const ddit::Tensor bias = ddit::Tensor::from({64}, std::vector<double>(64, 0.0));
  for (auto _ : state) benchmark::DoNotOptimize(ddit::layer_norm(x, gain, bias));
}
BENCHMARK(BM_LayerNorm);

}  // namespace

BENCHMARK_MAIN();
