// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/interpolant.hpp"

#include <string>

#include "ddit/errors.hpp"

namespace ddit {

namespace {

void check_t(double t, const char* op) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ValueError(std::string(op) + ": t must lie in [0, 1], got " + std::to_string(t));
  }
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Per-row coefficient tensor of x's shape.
Tensor rowwise(const Tensor& x, std::span<const double> coef) {
  if (x.rank() == 0 || x.dim(0) != coef.size()) {
    throw ShapeError("per-sample t must have one entry per leading index");
  }
  const std::size_t per = x.numel() / coef.size();
  std::vector<double> d(x.numel());
  for (std::size_t i = 0; i < coef.size(); ++i) {
    for (std::size_t k = 0; k < per; ++k) d[i * per + k] = coef[i];
  }
  return Tensor::from(x.shape(), std::move(d));
}

}  // namespace

const InterpolantSchedule& linear_schedule() {
  static const LinearSchedule kLinear;
  return kLinear;
}

Tensor interpolate(const Tensor& x_star, const Tensor& eps, double t,
                   const InterpolantSchedule& sched) {
  check_t(t, "interpolate");
  check_pair(x_star, eps, "interpolate");
  return add(scale(x_star, sched.alpha(t)), scale(eps, sched.sigma(t)));
}

Tensor velocity_target(const Tensor& x_star, const Tensor& eps, double t,
                       const InterpolantSchedule& sched) {
  check_pair(x_star, eps, "velocity_target");
  return add(scale(x_star, sched.alpha_dot(t)), scale(eps, sched.sigma_dot(t)));
}

Tensor interpolate(const Tensor& x_star, const Tensor& eps, std::span<const double> t,
                   const InterpolantSchedule& sched) {
  check_pair(x_star, eps, "interpolate");
  std::vector<double> a(t.size()), s(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    check_t(t[i], "interpolate");
    a[i] = sched.alpha(t[i]);
    s[i] = sched.sigma(t[i]);
  }
  return add(mul(x_star, rowwise(x_star, a)), mul(eps, rowwise(eps, s)));
}

Tensor velocity_target(const Tensor& x_star, const Tensor& eps, std::span<const double> t,
                       const InterpolantSchedule& sched) {
  check_pair(x_star, eps, "velocity_target");
  std::vector<double> a(t.size()), s(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    a[i] = sched.alpha_dot(t[i]);
    s[i] = sched.sigma_dot(t[i]);
  }
  return add(mul(x_star, rowwise(x_star, a)), mul(eps, rowwise(eps, s)));
}

Tensor score_from_velocity(const Tensor& x, const Tensor& v, double t,
                           const InterpolantSchedule& sched) {
  check_t(t, "score_from_velocity");
  check_pair(x, v, "score_from_velocity");
  const double sigma = sched.sigma(t);
  if (sigma == 0.0) throw ValueError("score_from_velocity: sigma_t is zero at t = " + std::to_string(t));
  const double alpha = sched.alpha(t);
  const double alpha_dot = sched.alpha_dot(t);
  const double denom = alpha * sched.sigma_dot(t) - alpha_dot * sigma;
  if (!(denom > 0.0)) throw ValueError("score_from_velocity: degenerate schedule at t");
  // -(alpha v - alpha_dot x) / (sigma denom)
  const double k = -1.0 / (sigma * denom);
  return add(scale(v, k * alpha), scale(x, -k * alpha_dot));
}

}  // namespace ddit
