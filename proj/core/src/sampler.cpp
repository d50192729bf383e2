// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/sampler.hpp"

#include <cmath>
#include <memory>

#include "ddit/errors.hpp"

namespace ddit {

namespace {
constexpr double kGridTol = 1e-9;
}

Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double g) {
  if (v_cond.shape() != v_uncond.shape()) throw ShapeError("cfg_velocity: shape mismatch");
  return add(v_uncond, scale(sub(v_cond, v_uncond), g));
}

Tensor ode_step(const Tensor& x, double t, double h, const VelocityFn& velocity) {
  if (!(h > 0.0)) throw ValueError("ode_step: h must be positive");
  if (t - h < -kGridTol) throw ValueError("ode_step: step crosses t = 0");
  return sub(x, scale(velocity(x, t), h));
}

std::vector<Rng> chain_rngs(std::uint64_t seed, std::size_t num_chains) {
  std::vector<Rng> rngs;
  rngs.reserve(num_chains);
  for (std::size_t i = 0; i < num_chains; ++i) rngs.emplace_back(seed, i);
  return rngs;
}

Tensor em_sde_step(const Tensor& x, double t, double h, const VelocityFn& velocity,
                   std::span<Rng> rngs, bool add_noise, double t_min,
                   const InterpolantSchedule& sched) {
  if (!(h > 0.0)) throw ValueError("em_sde_step: h must be positive");
  if (t - h < t_min - kGridTol) throw ValueError("em_sde_step: step goes below t_min");
  const Tensor v = velocity(x, t);
  const double w = sched.diffusion(t);
  Tensor drift = v;
  if (w != 0.0) drift = sub(v, scale(score_from_velocity(x, v, t, sched), 0.5 * w));
  Tensor next = sub(x, scale(drift, h));
  if (add_noise && w != 0.0) {
    const std::size_t chains = x.dim(0);
    if (rngs.size() != chains) throw ShapeError("em_sde_step: need one rng per chain");
    const std::size_t per = x.numel() / std::max<std::size_t>(chains, 1);
    std::vector<double> z(x.numel());
    for (std::size_t i = 0; i < chains; ++i) {
      for (std::size_t k = 0; k < per; ++k) z[i * per + k] = rngs[i].normal();
    }
    next = add(next, scale(Tensor::from(x.shape(), std::move(z)), std::sqrt(w * h)));
  }
  return next;
}

Tensor integrate(const VelocityFn& velocity, std::size_t num_samples, const Shape& sample_shape,
                 const SampleConfig& cfg, const InterpolantSchedule& sched) {
  cfg.validate();
  Shape shape{num_samples};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  if (num_samples == 0) return Tensor::zeros(shape);

  auto rngs = chain_rngs(cfg.seed, num_samples);
  const std::size_t per = numel(sample_shape);
  std::vector<double> x0(num_samples * per);
  for (std::size_t i = 0; i < num_samples; ++i) {
    for (std::size_t k = 0; k < per; ++k) x0[i * per + k] = rngs[i].normal();
  }
  Tensor x = Tensor::from(shape, std::move(x0));

  const double h = (1.0 - cfg.t_min) / static_cast<double>(cfg.num_steps);
  for (std::size_t k = 0; k < cfg.num_steps; ++k) {
    const double t = 1.0 - static_cast<double>(k) * h;
    if (cfg.mode == SampleMode::kOde) {
      x = ode_step(x, t, h, velocity);
    } else {
      const bool last = k + 1 == cfg.num_steps;
      x = em_sde_step(x, t, h, velocity, rngs, !last, cfg.t_min, sched);
    }
  }
  return x;
}

VelocityFn model_velocity(const ModelParams& params, const ModelConfig& cfg,
                          std::optional<std::size_t> class_id, double cfg_scale,
                          std::size_t* forward_calls) {
  if (class_id && *class_id >= cfg.num_classes) {
    throw ValueError("class id " + std::to_string(*class_id) + " out of range [0, " +
                     std::to_string(cfg.num_classes) + ")");
  }
  const std::size_t cond_class = class_id ? *class_id : cfg.null_class();
  auto frozen = std::make_shared<const ModelParams>(params.detached());
  return [frozen, cfg, cond_class, cfg_scale, forward_calls](const Tensor& x, double t) {
    const std::size_t n = x.dim(0);
    const std::vector<double> ts(n, t);
    auto eval = [&](std::size_t cls) {
      if (forward_calls) ++*forward_calls;
      const std::vector<std::size_t> ys(n, cls);
      return forward(*frozen, cfg, x, ts, ys).v_pred;
    };
    const Tensor v_cond = eval(cond_class);
    if (cfg_scale == 1.0) return v_cond;
    return cfg_velocity(v_cond, eval(cfg.null_class()), cfg_scale);
  };
}

Tensor sample(const ModelParams& params, const ModelConfig& model_cfg, const SampleConfig& cfg) {
  const Shape sample_shape = model_cfg.input_mode == DataMode::kPoints
                                 ? Shape{model_cfg.point_dim}
                                 : Shape{model_cfg.channels, model_cfg.image_size, model_cfg.image_size};
  const VelocityFn v = model_velocity(params, model_cfg, cfg.class_id, cfg.cfg_scale);
  return integrate(v, cfg.num_samples, sample_shape, cfg);
}

}  // namespace ddit
