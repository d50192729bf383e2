// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddit/config.hpp"
#include "ddit/container.hpp"
#include "ddit/data.hpp"
#include "ddit/losses.hpp"
#include "ddit/model.hpp"
#include "ddit/rng.hpp"

namespace ddit {

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct RunningStats {
  std::size_t count = 0;
  double sum_l_fm = 0.0;
  double sum_l_total = 0.0;
};

struct TrainState {
  ModelParams params;
  std::optional<Projector> projector;
  // One entry per trainable tensor, in parameter_refs() order.
  std::vector<AdamMoments> moments;
  std::size_t step = 0;
  Rng rng;
  RunningStats stats;

  // Model parameters followed by projector parameters (if any).
  ModelParams::Named parameter_refs();
  ModelParams::ConstNamed parameter_refs() const;
};

struct StepMetrics {
  std::size_t step = 0;
  double l_fm = 0.0;
  double l_orth = 0.0;
  double l_mi = 0.0;
  double l_disp = 0.0;
  double l_div = 0.0;
  double w = 0.0;
  double l_align = 0.0;
  double l_total = 0.0;
  double wallclock_ms = 0.0;

  nlohmann::json to_json() const;
};

// Gradients aligned with TrainState::parameter_refs().
using ParamGrads = std::vector<std::vector<double>>;

ParamGrads collect_grads(const TrainState& state, const Gradients& grads);

/// Bias-corrected Adam with decoupled weight decay. Increments the step.
/// Throws NumericError naming the parameter if a gradient is not finite.
TrainState adamw_step(TrainState state, const ParamGrads& grads, const TrainConfig& cfg);

/// Inputs of one training step after every random draw has been made.
struct PreparedBatch {
  Tensor x_star;
  std::vector<std::size_t> labels;  // after label dropout
  std::vector<double> t;
  Tensor eps;
};

struct LossEvaluation {
  LossBreakdown losses;
  ForwardResult forward;
};

class Trainer {
 public:
  explicit Trainer(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const PairSet& pairs() const { return pairs_; }
  const AlignmentEncoder& encoder() const { return encoder_; }

  TrainState init_state() const;

  // Label dropout, t ~ U[0, 1] and eps ~ N(0, I), all drawn from `rng`.
  PreparedBatch prepare(const Batch& batch, Rng& rng) const;

  // Forward pass plus loss composition with the given weights.
  LossEvaluation evaluate(const ModelParams& params, const std::optional<Projector>& projector,
                          const PreparedBatch& batch, const LossWeights& weights) const;
  LossWeights default_weights() const;

  // One optimisation step on an explicit batch / on a batch drawn from the
  // state's generator.
  StepMetrics step(TrainState& state, const Batch& batch) const;
  StepMetrics step(TrainState& state) const;

 private:
  RunConfig cfg_;
  PairSet pairs_;
  AlignmentEncoder encoder_;
};

// Checkpoints ----------------------------------------------------------------

struct Checkpoint {
  RunConfig config;
  TrainState state;
};

Container checkpoint_container(const RunConfig& cfg, const TrainState& state);
void save_checkpoint(const std::string& path, const RunConfig& cfg, const TrainState& state);
Checkpoint checkpoint_from_container(const Container& c);
Checkpoint load_checkpoint(const std::string& path);

// Training loop ----------------------------------------------------------------

struct TrainLoopOptions {
  std::string out_dir;  // empty: no files are written
  std::optional<std::string> resume_from;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainLoopResult {
  TrainState state;
  std::vector<StepMetrics> metrics;
};

/// Runs cfg.train.total_steps steps (resuming from a checkpoint if given).
/// With an output directory, writes ckpt_XXXXXXXX.ddit at step 0 (fresh runs),
/// every checkpoint_interval steps and at the end, plus metrics.jsonl.
TrainLoopResult run_training(const RunConfig& cfg, const TrainLoopOptions& opts = {});

}  // namespace ddit
