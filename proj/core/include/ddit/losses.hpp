// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flow-matching regression, the cross-block diversity terms, and the
// projection-alignment loss against frozen token targets.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ddit/config.hpp"
#include "ddit/model.hpp"
#include "ddit/rng.hpp"
#include "ddit/tensor.hpp"

namespace ddit {

/// Selected blocks and every unordered pair (i < j) among them.
struct PairSet {
  std::vector<std::size_t> blocks;  // sorted ascending
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

// All C(|blocks|, 2) pairs over the given (deduplicated, sorted) blocks.
PairSet make_pair_set(std::vector<std::size_t> blocks);
// `subset` blocks of `num_blocks`, drawn uniformly without replacement.
PairSet select_pairs(std::size_t num_blocks, std::size_t subset, std::uint64_t seed);

// mean over N and T: [N, T, D] -> [D]
Tensor block_mean(const Tensor& f);

// Mean cosine similarity of block means over the pairs.
Tensor orth_loss(const FeatureStack& features, const PairSet& pairs, double eps = 1e-8);
// Mean over pairs and tokens of the cosine between matched tokens.
Tensor mi_loss(const FeatureStack& features, const PairSet& pairs, double eps = 1e-8);
// Negated variance of the max-abs-normalised per-dimension activation
// profile, averaged over the distinct blocks in the pair set. Each block is
// flattened to [NT, D] and every column is l2-normalised across the NT rows.
Tensor disp_loss(const FeatureStack& features, const PairSet& pairs, double eps = 1e-8);

struct DiversityTerms {
  Tensor total;
  Tensor orth;
  Tensor mi;
  Tensor disp;
};
DiversityTerms diversity_loss(const FeatureStack& features, const DiversityConfig& cfg,
                              const PairSet& pairs);

// Piecewise schedule on the diversity loss value: 1 above hi, (l - lo)/0.5
// on (lo, hi], 0 otherwise. A plain number: no gradient flows through it.
double adaptive_weight(double l_div, double lo = 0.1, double hi = 0.5);

// MSE against alpha_dot x_* + sigma_dot eps (one t per sample).
Tensor flow_matching_loss(const Tensor& v_pred, const Tensor& x_star, const Tensor& eps,
                          std::span<const double> t);

/// Frozen token encoder standing in for a pretrained vision model, plus the
/// trainable 3-layer SiLU projector from hidden states to its feature space.
struct AlignmentEncoder {
  LinearParams fc1;  // token_dim -> out_dim
  LinearParams fc2;  // out_dim -> out_dim
};
struct Projector {
  LinearParams fc1;  // D -> hidden
  LinearParams fc2;  // hidden -> hidden
  LinearParams fc3;  // hidden -> out_dim

  ModelParams::Named named_parameters();
};

AlignmentEncoder make_alignment_encoder(std::size_t token_dim, std::size_t out_dim, std::uint64_t seed);
Projector init_projector(std::size_t hidden_dim, std::size_t proj_hidden, std::size_t out_dim, Rng& rng);

// Targets y_* for the clean tokens [N, T, token_dim] -> [N, T, out_dim].
Tensor alignment_targets(const AlignmentEncoder& enc, const Tensor& clean_tokens);
Tensor project(const Projector& proj, const Tensor& hidden);
// -mean over tokens of cos(targets, projected). Shapes must match.
Tensor alignment_loss_from_projection(const Tensor& projected, const Tensor& targets);
Tensor alignment_loss(const Tensor& hidden, const Projector& proj, const Tensor& targets);

struct LossWeights {
  bool diversity = true;
  bool alignment = false;
  double alignment_coef = 0.5;
  DiversityConfig diversity_cfg;
  // When set, used instead of adaptive_weight(L_div). Lets finite-difference
  // checks hold the (non-differentiated) weight fixed.
  std::optional<double> fixed_weight;
};

struct LossBreakdown {
  Tensor total;
  double l_fm = 0.0;
  double l_orth = 0.0;
  double l_mi = 0.0;
  double l_disp = 0.0;
  double l_div = 0.0;
  double w = 0.0;
  double l_align = 0.0;
};

/// L_fm + coef * L_align (if enabled) + w * L_div (if enabled), w detached.
/// `align_projected`/`align_targets` may be undefined when alignment is off.
LossBreakdown total_loss(const Tensor& v_pred, const Tensor& x_star, const Tensor& eps,
                         std::span<const double> t, const FeatureStack& features,
                         const PairSet& pairs, const LossWeights& weights,
                         const Tensor& align_projected = {}, const Tensor& align_targets = {});

}  // namespace ddit
