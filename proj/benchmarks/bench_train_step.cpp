// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "ddit/trainer.hpp"

namespace {

// One optimisation step of the default toy model (L=6, D=64, batch 128).
void BM_TrainStep(benchmark::State& state) {
  ddit::RunConfig cfg;
  cfg.train.diversity = state.range(0) != 0;
  cfg.finalize();
  const ddit::Trainer trainer(cfg);
  ddit::TrainState s = trainer.init_state();
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(s));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->ArgName("diversity")->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  ddit::RunConfig cfg;
  cfg.finalize();
  const ddit::ModelParams p = ddit::init_model(cfg.model).detached();
  ddit::Rng rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  const ddit::Batch b = ddit::sample_batch(cfg.data, n, rng);
  const std::vector<double> t(n, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(ddit::forward(p, cfg.model, b.x, t, b.y));
}
BENCHMARK(BM_Forward)->Arg(128)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
