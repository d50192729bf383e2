// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "ddit/analysis.hpp"

namespace {

ddit::FeatureMatrix random_features(std::size_t n, std::size_t p, std::uint64_t seed) {
  ddit::Rng rng(seed);
  ddit::FeatureMatrix m(n, p);
  for (double& v : m.values) v = rng.normal();
  return m;
}

void BM_Cka(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_features(n, 64, 1), y = random_features(n, 64, 2);
  const ddit::Kernel k = state.range(1) == 0 ? ddit::Kernel::linear() : ddit::Kernel::rbf();
  for (auto _ : state) benchmark::DoNotOptimize(ddit::cka(x, y, k));
  state.SetLabel(k.name());
}
BENCHMARK(BM_Cka)->ArgsProduct({{64, 256, 512}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_SimilarityMatrix(benchmark::State& state) {
  ddit::Rng rng(3);
  ddit::FeatureStack f;
  for (int b = 0; b < 6; ++b) f.push_back(ddit::Tensor::randn({256, 1, 64}, rng));
  for (auto _ : state) benchmark::DoNotOptimize(ddit::similarity_matrix(f, ddit::Kernel::linear(), 256, 0));
}
BENCHMARK(BM_SimilarityMatrix)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
