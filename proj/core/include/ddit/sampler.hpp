// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-time integrators from t = 1 (pure noise) down to t_min on a
// uniform grid. Each chain (leading index of x) owns an Rng stream derived
// from (seed, chain index), so results do not depend on batch grouping.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ddit/config.hpp"
#include "ddit/interpolant.hpp"
#include "ddit/model.hpp"
#include "ddit/rng.hpp"
#include "ddit/tensor.hpp"

namespace ddit {

// v(x, t) for a batch of chains sharing the same t.
using VelocityFn = std::function<Tensor(const Tensor& x, double t)>;

// v_uncond + g (v_cond - v_uncond)
Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double g);

// x - h v(x, t)
Tensor ode_step(const Tensor& x, double t, double h, const VelocityFn& velocity);

/// x - h (v - w_t s / 2) + sqrt(w_t h) z with s from score_from_velocity and
/// one rng per chain. `add_noise = false` gives the deterministic final step.
/// Throws ValueError if t - h falls below t_min.
Tensor em_sde_step(const Tensor& x, double t, double h, const VelocityFn& velocity,
                   std::span<Rng> chain_rngs, bool add_noise, double t_min,
                   const InterpolantSchedule& sched = linear_schedule());

std::vector<Rng> chain_rngs(std::uint64_t seed, std::size_t num_chains);

/// Integrates from x ~ N(0, I) drawn per chain. `sample_shape` excludes the
/// leading chain axis.
Tensor integrate(const VelocityFn& velocity, std::size_t num_samples, const Shape& sample_shape,
                 const SampleConfig& cfg, const InterpolantSchedule& sched = linear_schedule());

// Velocity of a trained model for a fixed class (or the null class) with
// classifier-free guidance. At g == 1 only the conditional branch runs.
// `forward_calls`, when given, counts model evaluations.
VelocityFn model_velocity(const ModelParams& params, const ModelConfig& cfg,
                          std::optional<std::size_t> class_id, double cfg_scale,
                          std::size_t* forward_calls = nullptr);

// Samples shaped [num_samples, 2] or [num_samples, C, H, W].
Tensor sample(const ModelParams& params, const ModelConfig& model_cfg, const SampleConfig& cfg);

}  // namespace ddit
