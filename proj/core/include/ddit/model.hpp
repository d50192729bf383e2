// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// SiT-style transformer over point or patch tokens, conditioned on (t, class)
// through adaLN modulation, with optional long residual junctions.
//
// Long residual junctions are 0-indexed: the output of block i, for
// i in [0, L/2), is fused into the input of block L-1-i:
//
//   input_{L-1-i} = Linear(Norm(f_i ++ f_{L-2-i}))
//
// where ++ concatenates along channels and f_{-1} is the embedded input.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddit/config.hpp"
#include "ddit/rng.hpp"
#include "ddit/tensor.hpp"

namespace ddit {

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

struct BlockParams {
  LinearParams modulation;  // D -> 6D: shift/scale/gate for attention and MLP
  LinearParams qkv;         // D -> 3D
  LinearParams attn_out;    // D -> D
  LinearParams fc1;         // D -> mlp_ratio*D
  LinearParams fc2;         // mlp_ratio*D -> D
};

struct FusionParams {
  Tensor norm_gain;     // [2D]
  Tensor norm_bias;     // [2D]
  LinearParams linear;  // 2D -> D
};

struct ModelParams {
  LinearParams embed;      // token_dim -> D
  LinearParams time_fc1;   // time_freq_dim -> D
  LinearParams time_fc2;   // D -> D
  Tensor class_table;      // [num_classes + 1, D]; last row is the null class
  std::vector<BlockParams> blocks;
  // fusions[i] feeds target block L-1-i. Empty without long residuals.
  std::vector<FusionParams> fusions;
  LinearParams final_modulation;  // D -> 2D
  LinearParams final_out;         // D -> token_dim
  // Fixed 2-D sin-cos position table [T, D] for grid inputs; not trained.
  Tensor pos_embed;

  using Named = std::vector<std::pair<std::string, Tensor*>>;
  using ConstNamed = std::vector<std::pair<std::string, const Tensor*>>;
  // Every trainable tensor, in a stable order.
  Named named_parameters();
  ConstNamed named_parameters() const;
  std::size_t parameter_count() const;
  // Copy whose tensors carry no gradient flag, for inference.
  ModelParams detached() const;
};

using FeatureStack = std::vector<Tensor>;  // L entries of [N, T, D]

struct ForwardResult {
  Tensor v_pred;          // same shape as the input batch
  FeatureStack features;  // output of every block
};

// Junction pairing for L blocks: (source, target) with target = L-1-source.
std::vector<std::pair<std::size_t, std::size_t>> long_residual_pairs(std::size_t num_blocks);

ModelParams init_model(const ModelConfig& cfg, Rng& rng);
ModelParams init_model(const ModelConfig& cfg);  // uses cfg.init_seed

// [N, C, H, W] -> [N, (H/p)(W/p), C p^2], patches in row-major order, each
// patch flattened as (c, dy, dx).
Tensor patchify(const Tensor& images, std::size_t patch);
Tensor unpatchify(const Tensor& tokens, std::size_t channels, std::size_t height,
                  std::size_t width, std::size_t patch);

// Sinusoidal features of 1000 t: [cos(1000 t f_k)..., sin(1000 t f_k)...] with
// f_k = 10000^(-k / half). Returns [N, freq_dim].
Tensor timestep_features(std::span<const double> t, std::size_t freq_dim);
// Two-layer SiLU MLP over the sinusoidal features: [N, D].
Tensor time_embed(const ModelParams& params, std::span<const double> t, std::size_t freq_dim);

Tensor long_residual_fuse(const Tensor& f_skip, const Tensor& f_prev, const FusionParams& fusion);

struct AttentionResult {
  Tensor out;    // [N, T, D]
  Tensor probs;  // [N * heads, T, T]
};
AttentionResult self_attention(const Tensor& x, const BlockParams& block, std::size_t num_heads);

// One adaLN block. `cond` is SiLU(c) of shape [N, D].
Tensor block_forward(const Tensor& x, const Tensor& cond, const BlockParams& block,
                     std::size_t num_heads);

/// Full forward pass. `t` holds one time per sample and `y` one class id per
/// sample in [0, num_classes] (num_classes is the null class).
ForwardResult forward(const ModelParams& params, const ModelConfig& cfg, const Tensor& x,
                      std::span<const double> t, std::span<const std::size_t> y);

}  // namespace ddit
