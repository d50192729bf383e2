// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Configuration records for every stage of a run, plus the strict JSON
// mapping used by run files and checkpoint manifests. A run file holds
// exactly the key groups "model", "diversity", "train", "sample", "data";
// any unknown key at any level is a ConfigError.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ddit {

enum class DataMode { kPoints, kGrid };
enum class PointKind { kGaussian8, kCheckerboard };
enum class SampleMode { kSde, kOde };

struct DatasetSpec {
  DataMode mode = DataMode::kPoints;
  PointKind kind = PointKind::kGaussian8;
  double mode_std = 0.15;
  // grid mode
  std::size_t image_size = 8;
  std::size_t channels = 1;
  std::size_t num_classes = 9;
  double blob_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ModelConfig {
  std::size_t num_blocks = 6;
  std::size_t hidden_dim = 64;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  bool use_long_residual = true;
  std::size_t patch_size = 2;
  std::size_t time_freq_dim = 64;
  std::uint64_t init_seed = 0;

  // Input geometry. Filled from the dataset by with_geometry().
  DataMode input_mode = DataMode::kPoints;
  std::size_t point_dim = 2;
  std::size_t channels = 1;
  std::size_t image_size = 8;
  std::size_t num_classes = 8;

  std::size_t token_count() const;
  // Per-token input width: point_dim, or channels * patch^2.
  std::size_t token_dim() const;
  // Index of the null (unconditional) class.
  std::size_t null_class() const { return num_classes; }
  void validate() const;
};

ModelConfig with_geometry(ModelConfig model, const DatasetSpec& data);

struct DiversityConfig {
  double lambda_orth = 0.33;
  double lambda_mi = 0.33;
  double lambda_disp = 0.33;
  double adaptive_lo = 0.1;
  double adaptive_hi = 0.5;
  // 0 selects min(10, L).
  std::size_t layer_subset_size = 0;
  double eps = 1e-8;
  std::uint64_t selection_seed = 0;

  std::size_t subset_size(std::size_t num_blocks) const;
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t batch_size = 128;
  std::size_t total_steps = 5000;
  double label_dropout_prob = 0.1;
  bool diversity = true;
  bool alignment = false;
  std::size_t alignment_depth = 2;
  double alignment_coef = 0.5;
  std::size_t alignment_dim = 32;
  std::size_t projector_hidden = 64;
  std::uint64_t encoder_seed = 1234;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 1000;
  std::size_t log_interval = 1;

  void validate() const;
};

struct SampleConfig {
  std::size_t num_steps = 250;
  SampleMode mode = SampleMode::kSde;
  double cfg_scale = 1.0;
  // nullopt samples unconditionally (null class).
  std::optional<std::size_t> class_id;
  std::size_t num_samples = 16;
  std::uint64_t seed = 0;
  double t_min = 1e-3;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  DiversityConfig diversity;
  TrainConfig train;
  SampleConfig sample;
  DatasetSpec data;

  // Fills model geometry from data and runs every cross-field check.
  void finalize();
};

nlohmann::json to_json(const RunConfig& cfg);
// Strict: unknown keys and wrong types raise ConfigError. Missing keys keep
// their defaults. The result is finalized.
RunConfig run_config_from_json(const nlohmann::json& j);
// Parses text; syntax errors raise ConfigError carrying the byte position.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

std::string to_string(DataMode m);
std::string to_string(PointKind k);
std::string to_string(SampleMode m);
SampleMode parse_sample_mode(std::string_view s);

}  // namespace ddit
