// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/model.hpp"

#include <cmath>

#include "ddit/errors.hpp"

namespace ddit {

namespace {

constexpr double kLnEps = 1e-6;
// Near-zero init for modulation and output heads: keeps the adaLN-zero
// starting point (blocks close to identity, output close to 0) while every
// parameter still receives gradient on the first step.
constexpr double kHeadInitStd = 0.02;

LinearParams fan_in_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {Tensor::uniform({in, out}, rng, -bound, bound, true), Tensor::zeros({out}, true)};
}

LinearParams small_linear(std::size_t in, std::size_t out, Rng& rng) {
  return {Tensor::randn({in, out}, rng, kHeadInitStd, true), Tensor::zeros({out}, true)};
}

Tensor sincos_pos_embed(std::size_t grid, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("grid inputs need hidden_dim divisible by 4");
  const std::size_t quarter = dim / 4;
  std::vector<double> d(grid * grid * dim);
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      double* row = d.data() + (r * grid + c) * dim;
      for (std::size_t k = 0; k < quarter; ++k) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / static_cast<double>(quarter));
        // First half encodes the column, second half the row.
        row[k] = std::sin(static_cast<double>(c) * omega);
        row[quarter + k] = std::cos(static_cast<double>(c) * omega);
        row[2 * quarter + k] = std::sin(static_cast<double>(r) * omega);
        row[3 * quarter + k] = std::cos(static_cast<double>(r) * omega);
      }
    }
  }
  return Tensor::from({grid * grid, dim}, std::move(d));
}

void push_linear(ModelParams::Named& out, const std::string& name, LinearParams& p) {
  out.emplace_back(name + ".weight", &p.weight);
  out.emplace_back(name + ".bias", &p.bias);
}

// x * (1 + scale) + shift with scale/shift of shape [N, D] broadcast over T.
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale_) {
  const std::size_t t = x.dim(1);
  return add(mul(x, expand_mid(add_scalar(scale_, 1.0), t)), expand_mid(shift, t));
}

}  // namespace

ModelParams::Named ModelParams::named_parameters() {
  Named out;
  push_linear(out, "embed", embed);
  push_linear(out, "time.fc1", time_fc1);
  push_linear(out, "time.fc2", time_fc2);
  out.emplace_back("class_table", &class_table);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l);
    push_linear(out, p + ".modulation", blocks[l].modulation);
    push_linear(out, p + ".qkv", blocks[l].qkv);
    push_linear(out, p + ".attn_out", blocks[l].attn_out);
    push_linear(out, p + ".fc1", blocks[l].fc1);
    push_linear(out, p + ".fc2", blocks[l].fc2);
  }
  for (std::size_t i = 0; i < fusions.size(); ++i) {
    const std::string p = "fusions." + std::to_string(i);
    out.emplace_back(p + ".norm_gain", &fusions[i].norm_gain);
    out.emplace_back(p + ".norm_bias", &fusions[i].norm_bias);
    push_linear(out, p + ".linear", fusions[i].linear);
  }
  push_linear(out, "final.modulation", final_modulation);
  push_linear(out, "final.out", final_out);
  return out;
}

ModelParams::ConstNamed ModelParams::named_parameters() const {
  ConstNamed out;
  for (auto& [name, ptr] : const_cast<ModelParams*>(this)->named_parameters()) out.emplace_back(name, ptr);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : named_parameters()) n += t->numel();
  return n;
}

ModelParams ModelParams::detached() const {
  ModelParams copy = *this;
  for (auto& [_, t] : copy.named_parameters()) *t = t->detach();
  return copy;
}

std::vector<std::pair<std::size_t, std::size_t>> long_residual_pairs(std::size_t num_blocks) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < num_blocks / 2; ++i) pairs.emplace_back(i, num_blocks - 1 - i);
  return pairs;
}

ModelParams init_model(const ModelConfig& cfg) {
  Rng rng(cfg.init_seed);
  return init_model(cfg, rng);
}

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.hidden_dim;
  ModelParams p;
  p.embed = fan_in_linear(cfg.token_dim(), d, rng);
  p.time_fc1 = fan_in_linear(cfg.time_freq_dim, d, rng);
  p.time_fc2 = fan_in_linear(d, d, rng);
  p.class_table = Tensor::randn({cfg.num_classes + 1, d}, rng, kHeadInitStd, true);
  p.blocks.reserve(cfg.num_blocks);
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    BlockParams b;
    b.modulation = small_linear(d, 6 * d, rng);
    b.qkv = fan_in_linear(d, 3 * d, rng);
    b.attn_out = fan_in_linear(d, d, rng);
    b.fc1 = fan_in_linear(d, cfg.mlp_ratio * d, rng);
    b.fc2 = fan_in_linear(cfg.mlp_ratio * d, d, rng);
    p.blocks.push_back(std::move(b));
  }
  if (cfg.use_long_residual) {
    for (std::size_t i = 0; i < cfg.num_blocks / 2; ++i) {
      FusionParams f;
      f.norm_gain = Tensor::full({2 * d}, 1.0, true);
      f.norm_bias = Tensor::zeros({2 * d}, true);
      f.linear = fan_in_linear(2 * d, d, rng);
      p.fusions.push_back(std::move(f));
    }
  }
  p.final_modulation = small_linear(d, 2 * d, rng);
  p.final_out = small_linear(d, cfg.token_dim(), rng);
  if (cfg.input_mode == DataMode::kGrid) {
    p.pos_embed = sincos_pos_embed(cfg.image_size / cfg.patch_size, d);
  }
  return p;
}

Tensor patchify(const Tensor& images, std::size_t patch) {
  if (images.rank() != 4) throw ShapeError("patchify: expects [N, C, H, W]");
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("patchify: patch size " + std::to_string(patch) + " does not divide " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t gh = h / patch, gw = w / patch;
  // [N, C, gh, p, gw, p] -> [N, gh, gw, C, p, p]
  Tensor x = reshape(images, {n, c, gh, patch, gw, patch});
  x = permute(x, {0, 2, 4, 1, 3, 5});
  return reshape(x, {n, gh * gw, c * patch * patch});
}

Tensor unpatchify(const Tensor& tokens, std::size_t channels, std::size_t height,
                  std::size_t width, std::size_t patch) {
  if (tokens.rank() != 3) throw ShapeError("unpatchify: expects [N, T, C p^2]");
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ShapeError("unpatchify: patch size does not divide the image");
  }
  const std::size_t n = tokens.dim(0), gh = height / patch, gw = width / patch;
  if (tokens.dim(1) != gh * gw || tokens.dim(2) != channels * patch * patch) {
    throw ShapeError("unpatchify: token shape " + shape_str(tokens.shape()) + " does not match image");
  }
  Tensor x = reshape(tokens, {n, gh, gw, channels, patch, patch});
  x = permute(x, {0, 3, 1, 4, 2, 5});
  return reshape(x, {n, channels, height, width});
}

Tensor timestep_features(std::span<const double> t, std::size_t freq_dim) {
  if (freq_dim < 2 || freq_dim % 2 != 0) throw ValueError("timestep_features: freq_dim must be even");
  const std::size_t half = freq_dim / 2;
  std::vector<double> d(t.size() * freq_dim);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] >= 0.0 && t[i] <= 1.0)) throw ValueError("timestep_features: t must lie in [0, 1]");
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = 1000.0 * t[i] * freq;
      d[i * freq_dim + k] = std::cos(arg);
      d[i * freq_dim + half + k] = std::sin(arg);
    }
  }
  return Tensor::from({t.size(), freq_dim}, std::move(d));
}

Tensor time_embed(const ModelParams& params, std::span<const double> t, std::size_t freq_dim) {
  const Tensor f = timestep_features(t, freq_dim);
  Tensor h = silu(linear(f, params.time_fc1.weight, params.time_fc1.bias));
  return linear(h, params.time_fc2.weight, params.time_fc2.bias);
}

Tensor long_residual_fuse(const Tensor& f_skip, const Tensor& f_prev, const FusionParams& fusion) {
  if (f_skip.shape() != f_prev.shape()) {
    throw ShapeError("long_residual_fuse: " + shape_str(f_skip.shape()) + " vs " +
                     shape_str(f_prev.shape()));
  }
  if (!fusion.linear.weight.defined()) throw ValueError("long_residual_fuse: junction has no parameters");
  const Tensor cat = concat_last(f_skip, f_prev);
  const Tensor normed = layer_norm(cat, fusion.norm_gain, fusion.norm_bias, kLnEps);
  return linear(normed, fusion.linear.weight, fusion.linear.bias);
}

AttentionResult self_attention(const Tensor& x, const BlockParams& block, std::size_t num_heads) {
  const std::size_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  if (num_heads == 0 || d % num_heads != 0) throw ShapeError("self_attention: heads must divide width");
  const std::size_t hd = d / num_heads;
  const Tensor qkv = linear(x, block.qkv.weight, block.qkv.bias);
  auto split_heads = [&](std::size_t which) {
    Tensor part = slice_last(qkv, which * d, d);
    part = permute(reshape(part, {n, t, num_heads, hd}), {0, 2, 1, 3});
    return reshape(part, {n * num_heads, t, hd});
  };
  const Tensor q = split_heads(0), k = split_heads(1), v = split_heads(2);
  const Tensor scores = scale(bmm(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(hd)));
  const Tensor probs = softmax_last(scores);
  Tensor ctx = reshape(bmm(probs, v), {n, num_heads, t, hd});
  ctx = reshape(permute(ctx, {0, 2, 1, 3}), {n, t, d});
  return {linear(ctx, block.attn_out.weight, block.attn_out.bias), probs};
}

Tensor block_forward(const Tensor& x, const Tensor& cond, const BlockParams& block,
                     std::size_t num_heads) {
  const std::size_t d = x.dim(2), t = x.dim(1);
  const Tensor mod = linear(cond, block.modulation.weight, block.modulation.bias);
  auto chunk = [&](std::size_t i) { return slice_last(mod, i * d, d); };
  const Tensor shift_msa = chunk(0), scale_msa = chunk(1), gate_msa = chunk(2);
  const Tensor shift_mlp = chunk(3), scale_mlp = chunk(4), gate_mlp = chunk(5);

  const Tensor h1 = modulate(layer_norm(x, {}, {}, kLnEps), shift_msa, scale_msa);
  Tensor out = add(x, mul(expand_mid(gate_msa, t), self_attention(h1, block, num_heads).out));

  const Tensor h2 = modulate(layer_norm(out, {}, {}, kLnEps), shift_mlp, scale_mlp);
  const Tensor mlp = linear(gelu(linear(h2, block.fc1.weight, block.fc1.bias)), block.fc2.weight,
                            block.fc2.bias);
  return add(out, mul(expand_mid(gate_mlp, t), mlp));
}

ForwardResult forward(const ModelParams& params, const ModelConfig& cfg, const Tensor& x,
                      std::span<const double> t, std::span<const std::size_t> y) {
  const std::size_t n = x.dim(0);
  if (t.size() != n || y.size() != n) throw ShapeError("forward: t and y need one entry per sample");
  for (auto c : y) {
    if (c > cfg.num_classes) {
      throw ValueError("forward: class id " + std::to_string(c) + " outside [0, " +
                       std::to_string(cfg.num_classes) + "]");
    }
  }
  if (params.blocks.size() != cfg.num_blocks) throw ShapeError("forward: parameter/config block count differs");
  if (cfg.use_long_residual && params.fusions.size() != cfg.num_blocks / 2) {
    throw ShapeError("forward: long residual junction parameters missing");
  }

  Tensor tokens;
  if (cfg.input_mode == DataMode::kPoints) {
    if (x.rank() != 2 || x.dim(1) != cfg.point_dim) throw ShapeError("forward: points input must be [N, 2]");
    tokens = reshape(x, {n, 1, cfg.point_dim});
  } else {
    if (x.rank() != 4 || x.dim(1) != cfg.channels || x.dim(2) != cfg.image_size || x.dim(3) != cfg.image_size) {
      throw ShapeError("forward: grid input shape " + shape_str(x.shape()) + " does not match config");
    }
    tokens = patchify(x, cfg.patch_size);
  }
  const std::size_t ntok = tokens.dim(1), d = cfg.hidden_dim;

  Tensor h = linear(tokens, params.embed.weight, params.embed.bias);
  if (params.pos_embed.defined()) {
    std::vector<double> pe(n * ntok * d);
    const auto src = params.pos_embed.data();
    for (std::size_t i = 0; i < n; ++i) std::copy(src.begin(), src.end(), pe.begin() + i * ntok * d);
    h = add(h, Tensor::from({n, ntok, d}, std::move(pe)));
  }

  const Tensor c = add(time_embed(params, t, cfg.time_freq_dim), gather_rows(params.class_table, y));
  const Tensor cond = silu(c);

  ForwardResult res;
  res.features.reserve(cfg.num_blocks);
  Tensor prev = h;
  const std::size_t half = cfg.num_blocks / 2;
  for (std::size_t l = 0; l < cfg.num_blocks; ++l) {
    Tensor input = prev;
    if (cfg.use_long_residual && l >= cfg.num_blocks - half) {
      const std::size_t source = cfg.num_blocks - 1 - l;
      input = long_residual_fuse(res.features[source], prev, params.fusions[source]);
    }
    prev = block_forward(input, cond, params.blocks[l], cfg.num_heads);
    res.features.push_back(prev);
  }

  const Tensor fmod = linear(cond, params.final_modulation.weight, params.final_modulation.bias);
  const Tensor out_h = modulate(layer_norm(prev, {}, {}, kLnEps), slice_last(fmod, 0, d), slice_last(fmod, d, d));
  const Tensor out_tok = linear(out_h, params.final_out.weight, params.final_out.bias);
  if (cfg.input_mode == DataMode::kPoints) {
    res.v_pred = reshape(out_tok, {n, cfg.point_dim});
  } else {
    res.v_pred = unpatchify(out_tok, cfg.channels, cfg.image_size, cfg.image_size, cfg.patch_size);
  }
  return res;
}

}  // namespace ddit
