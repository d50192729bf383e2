// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddit/tensor.hpp"

namespace ddit {

/// Coefficients of x_t = alpha(t) x_* + sigma(t) eps and the diffusion
/// coefficient w(t) used by the reverse SDE.
class InterpolantSchedule {
 public:
  virtual ~InterpolantSchedule() = default;
  virtual double alpha(double t) const = 0;
  virtual double sigma(double t) const = 0;
  virtual double alpha_dot(double t) const = 0;
  virtual double sigma_dot(double t) const = 0;
  virtual double diffusion(double t) const = 0;
};

/// alpha = 1 - t, sigma = t, w = sigma.
class LinearSchedule final : public InterpolantSchedule {
 public:
  double alpha(double t) const override { return 1.0 - t; }
  double sigma(double t) const override { return t; }
  double alpha_dot(double) const override { return -1.0; }
  double sigma_dot(double) const override { return 1.0; }
  double diffusion(double t) const override { return sigma(t); }
};

const InterpolantSchedule& linear_schedule();

// alpha_t x_* + sigma_t eps. Throws ValueError for t outside [0, 1].
Tensor interpolate(const Tensor& x_star, const Tensor& eps, double t,
                   const InterpolantSchedule& sched = linear_schedule());

// alpha_dot_t x_* + sigma_dot_t eps.
Tensor velocity_target(const Tensor& x_star, const Tensor& eps, double t,
                       const InterpolantSchedule& sched = linear_schedule());

// Per-sample variants: t[n] applies to the n-th slice along axis 0.
Tensor interpolate(const Tensor& x_star, const Tensor& eps, std::span<const double> t,
                   const InterpolantSchedule& sched = linear_schedule());
Tensor velocity_target(const Tensor& x_star, const Tensor& eps, std::span<const double> t,
                       const InterpolantSchedule& sched = linear_schedule());

/// Score of p_t recovered from the velocity:
///   s = -(1/sigma_t) (alpha_t v - alpha_dot_t x) / (alpha_t sigma_dot_t - alpha_dot_t sigma_t)
/// which is -E[eps | x_t = x] / sigma_t. Throws ValueError when sigma_t == 0.
Tensor score_from_velocity(const Tensor& x, const Tensor& v, double t,
                           const InterpolantSchedule& sched = linear_schedule());

}  // namespace ddit
