// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ddit/errors.hpp"
#include "ddit/interpolant.hpp"

namespace ddit {

namespace {

void require_pairs(const FeatureStack& features, const PairSet& pairs, const char* op) {
  if (pairs.pairs.empty()) throw ValueError(std::string(op) + ": pair set is empty");
  for (auto [i, j] : pairs.pairs) {
    if (i >= features.size() || j >= features.size()) {
      throw ValueError(std::string(op) + ": pair index outside the feature stack");
    }
    if (features[i].shape() != features[j].shape()) {
      throw ShapeError(std::string(op) + ": blocks differ in shape");
    }
  }
}

// Distinct blocks referenced by the pairs, ascending.
std::vector<std::size_t> blocks_in(const PairSet& pairs) {
  std::vector<std::size_t> b;
  for (auto [i, j] : pairs.pairs) {
    b.push_back(i);
    b.push_back(j);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

Tensor flatten_tokens(const Tensor& f) {
  if (f.rank() != 3) throw ShapeError("feature blocks must be [N, T, D]");
  return reshape(f, {f.dim(0) * f.dim(1), f.dim(2)});
}

}  // namespace

PairSet make_pair_set(std::vector<std::size_t> blocks) {
  std::sort(blocks.begin(), blocks.end());
  blocks.erase(std::unique(blocks.begin(), blocks.end()), blocks.end());
  PairSet ps;
  ps.blocks = std::move(blocks);
  for (std::size_t a = 0; a < ps.blocks.size(); ++a) {
    for (std::size_t b = a + 1; b < ps.blocks.size(); ++b) ps.pairs.emplace_back(ps.blocks[a], ps.blocks[b]);
  }
  return ps;
}

PairSet select_pairs(std::size_t num_blocks, std::size_t subset, std::uint64_t seed) {
  if (subset < 2 || subset > num_blocks) {
    throw ValueError("select_pairs: subset size must lie in [2, num_blocks]");
  }
  std::vector<std::size_t> idx(num_blocks);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed, /*stream=*/0x5e1ec7);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < subset; ++i) {
    const std::size_t j = i + rng.below(num_blocks - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(subset);
  return make_pair_set(std::move(idx));
}

Tensor block_mean(const Tensor& f) {
  if (f.dim(0) == 0 || f.dim(1) == 0) throw ShapeError("block_mean: needs N, T >= 1");
  return mean_axis(flatten_tokens(f), 0);
}

Tensor orth_loss(const FeatureStack& features, const PairSet& pairs, double eps) {
  require_pairs(features, pairs, "orth_loss");
  std::map<std::size_t, Tensor> means;
  for (auto b : blocks_in(pairs)) means.emplace(b, l2_normalize(block_mean(features[b]), eps));
  Tensor acc;
  for (auto [i, j] : pairs.pairs) {
    Tensor c = sum(mul(means.at(i), means.at(j)));
    acc = acc.defined() ? add(acc, c) : c;
  }
  return scale(acc, 1.0 / static_cast<double>(pairs.pairs.size()));
}

Tensor mi_loss(const FeatureStack& features, const PairSet& pairs, double eps) {
  require_pairs(features, pairs, "mi_loss");
  std::map<std::size_t, Tensor> normed;
  for (auto b : blocks_in(pairs)) normed.emplace(b, l2_normalize(flatten_tokens(features[b]), eps));
  const std::size_t tokens = normed.begin()->second.dim(0);
  Tensor acc;
  for (auto [i, j] : pairs.pairs) {
    Tensor c = sum(mul(normed.at(i), normed.at(j)));
    acc = acc.defined() ? add(acc, c) : c;
  }
  return scale(acc, 1.0 / static_cast<double>(pairs.pairs.size() * tokens));
}

Tensor disp_loss(const FeatureStack& features, const PairSet& pairs, double eps) {
  require_pairs(features, pairs, "disp_loss");
  const auto blocks = blocks_in(pairs);
  const Tensor& f0 = features[blocks.front()];
  if (f0.dim(2) < 2) throw ValueError("disp_loss: needs D >= 2 for a variance over dimensions");
  if (f0.dim(0) * f0.dim(1) < 2) throw ValueError("disp_loss: needs N*T >= 2");
  Tensor a;
  for (auto b : blocks) {
    // [D, NT]: each row is one dimension across the samples.
    const Tensor cols = l2_normalize(transpose(flatten_tokens(features[b])), eps);
    Tensor m = mean_axis(cols, 1);
    a = a.defined() ? add(a, m) : m;
  }
  a = scale(a, 1.0 / static_cast<double>(blocks.size()));
  const Tensor a_norm = div(a, add_scalar(max_abs(a), eps));
  const Tensor centered = sub(a_norm, mean(a_norm));
  return neg(mean(square(centered)));
}

DiversityTerms diversity_loss(const FeatureStack& features, const DiversityConfig& cfg,
                              const PairSet& pairs) {
  DiversityTerms d;
  d.orth = orth_loss(features, pairs, cfg.eps);
  d.mi = mi_loss(features, pairs, cfg.eps);
  d.disp = disp_loss(features, pairs, cfg.eps);
  d.total = add(add(scale(d.orth, cfg.lambda_orth), scale(d.mi, cfg.lambda_mi)),
                scale(d.disp, cfg.lambda_disp));
  return d;
}

double adaptive_weight(double l_div, double lo, double hi) {
  if (!(lo < hi)) throw ValueError("adaptive_weight: requires lo < hi");
  if (l_div > hi) return 1.0;
  if (l_div > lo) return (l_div - lo) / 0.5;
  return 0.0;
}

Tensor flow_matching_loss(const Tensor& v_pred, const Tensor& x_star, const Tensor& eps,
                          std::span<const double> t) {
  const Tensor target = velocity_target(x_star, eps, t);
  if (v_pred.shape() != target.shape()) throw ShapeError("flow_matching_loss: prediction shape differs from target");
  return mean(square(sub(v_pred, target)));
}

ModelParams::Named Projector::named_parameters() {
  ModelParams::Named out;
  out.emplace_back("projector.fc1.weight", &fc1.weight);
  out.emplace_back("projector.fc1.bias", &fc1.bias);
  out.emplace_back("projector.fc2.weight", &fc2.weight);
  out.emplace_back("projector.fc2.bias", &fc2.bias);
  out.emplace_back("projector.fc3.weight", &fc3.weight);
  out.emplace_back("projector.fc3.bias", &fc3.bias);
  return out;
}

namespace {
LinearParams uniform_linear(std::size_t in, std::size_t out, Rng& rng, bool trainable) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {Tensor::uniform({in, out}, rng, -bound, bound, trainable), Tensor::zeros({out}, trainable)};
}
}  // namespace

AlignmentEncoder make_alignment_encoder(std::size_t token_dim, std::size_t out_dim, std::uint64_t seed) {
  Rng rng(seed, /*stream=*/0xe4c0de);
  AlignmentEncoder enc;
  enc.fc1 = uniform_linear(token_dim, out_dim, rng, false);
  enc.fc2 = uniform_linear(out_dim, out_dim, rng, false);
  return enc;
}

Projector init_projector(std::size_t hidden_dim, std::size_t proj_hidden, std::size_t out_dim, Rng& rng) {
  Projector p;
  p.fc1 = uniform_linear(hidden_dim, proj_hidden, rng, true);
  p.fc2 = uniform_linear(proj_hidden, proj_hidden, rng, true);
  p.fc3 = uniform_linear(proj_hidden, out_dim, rng, true);
  return p;
}

Tensor alignment_targets(const AlignmentEncoder& enc, const Tensor& clean_tokens) {
  Tensor h = silu(linear(clean_tokens.detach(), enc.fc1.weight, enc.fc1.bias));
  return linear(h, enc.fc2.weight, enc.fc2.bias).detach();
}

Tensor project(const Projector& proj, const Tensor& hidden) {
  Tensor h = silu(linear(hidden, proj.fc1.weight, proj.fc1.bias));
  h = silu(linear(h, proj.fc2.weight, proj.fc2.bias));
  return linear(h, proj.fc3.weight, proj.fc3.bias);
}

Tensor alignment_loss_from_projection(const Tensor& projected, const Tensor& targets) {
  if (projected.rank() != 3 || targets.rank() != 3 || projected.dim(0) != targets.dim(0) ||
      projected.dim(1) != targets.dim(1)) {
    throw ShapeError("alignment_loss: token mismatch " + shape_str(projected.shape()) + " vs " +
                     shape_str(targets.shape()));
  }
  if (projected.shape() != targets.shape()) throw ShapeError("alignment_loss: feature width mismatch");
  return neg(mean(cosine_similarity(targets, projected, 1e-8)));
}

Tensor alignment_loss(const Tensor& hidden, const Projector& proj, const Tensor& targets) {
  if (hidden.rank() != 3 || targets.rank() != 3 || hidden.dim(0) != targets.dim(0) ||
      hidden.dim(1) != targets.dim(1)) {
    throw ShapeError("alignment_loss: token mismatch " + shape_str(hidden.shape()) + " vs " +
                     shape_str(targets.shape()));
  }
  return alignment_loss_from_projection(project(proj, hidden), targets);
}

LossBreakdown total_loss(const Tensor& v_pred, const Tensor& x_star, const Tensor& eps,
                         std::span<const double> t, const FeatureStack& features,
                         const PairSet& pairs, const LossWeights& weights,
                         const Tensor& align_projected, const Tensor& align_targets) {
  LossBreakdown out;
  const Tensor fm = flow_matching_loss(v_pred, x_star, eps, t);
  out.l_fm = fm.item();
  Tensor total = fm;
  if (weights.alignment) {
    const Tensor al = alignment_loss_from_projection(align_projected, align_targets);
    out.l_align = al.item();
    total = add(total, scale(al, weights.alignment_coef));
  }
  if (weights.diversity) {
    const DiversityTerms div = diversity_loss(features, weights.diversity_cfg, pairs);
    out.l_orth = div.orth.item();
    out.l_mi = div.mi.item();
    out.l_disp = div.disp.item();
    out.l_div = div.total.item();
    out.w = weights.fixed_weight
                ? *weights.fixed_weight
                : adaptive_weight(out.l_div, weights.diversity_cfg.adaptive_lo, weights.diversity_cfg.adaptive_hi);
    if (out.w != 0.0) total = add(total, scale(div.total, out.w));
  }
  out.total = total;
  return out;
}

}  // namespace ddit
