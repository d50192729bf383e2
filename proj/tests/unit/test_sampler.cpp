// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>

#include "ddit/errors.hpp"
#include "ddit/sampler.hpp"
#include "test_support.hpp"

using namespace ddit;
using Catch::Matchers::WithinAbs;

namespace {

// Exact velocity of the linear interpolant for 1-D standard-Gaussian data.
Tensor gaussian_velocity(const Tensor& x, double t) {
  const double c = (1 - t) * (1 - t) + t * t;
  return scale(x, (2 * t - 1) / c);
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const Tensor& x) {
  Moments m;
  for (double v : x.data()) m.mean += v;
  m.mean /= static_cast<double>(x.numel());
  for (double v : x.data()) m.var += (v - m.mean) * (v - m.mean);
  m.var /= static_cast<double>(x.numel() - 1);
  return m;
}

// Linear schedule with the diffusion switched off.
class NoDiffusion final : public InterpolantSchedule {
 public:
  double alpha(double t) const override { return 1.0 - t; }
  double sigma(double t) const override { return t; }
  double alpha_dot(double) const override { return -1.0; }
  double sigma_dot(double) const override { return 1.0; }
  double diffusion(double) const override { return 0.0; }
};

SampleConfig gaussian_cfg(SampleMode mode, std::size_t n, std::size_t steps = 250) {
  SampleConfig c;
  c.mode = mode;
  c.num_samples = n;
  c.num_steps = steps;
  c.seed = 2024;
  return c;
}

}  // namespace

TEST_CASE("classifier-free guidance combination", "[sampler]") {
  const Tensor vc = Tensor::from({2}, {1.0, -0.5}), vu = Tensor::from({2}, {0.25, 2.0});
  const Tensor g1 = cfg_velocity(vc, vu, 1.0);
  CHECK(std::equal(g1.data().begin(), g1.data().end(), vc.data().begin()));
  const Tensor g0 = cfg_velocity(vc, vu, 0.0);
  CHECK(std::equal(g0.data().begin(), g0.data().end(), vu.data().begin()));
  CHECK_THAT(cfg_velocity(Tensor::from({1}, {1.0}), Tensor::from({1}, {0.0}), 1.35).item(), WithinAbs(1.35, 1e-15));
}

TEST_CASE("ode step", "[sampler]") {
  const Tensor x = Tensor::from({2}, {0.3, -1.2});
  const VelocityFn zero = [](const Tensor& v, double) { return Tensor::zeros(v.shape()); };
  const Tensor same = ode_step(x, 0.5, 0.1, zero);
  CHECK(std::equal(same.data().begin(), same.data().end(), x.data().begin()));

  const VelocityFn konst = [](const Tensor& v, double) { return Tensor::full(v.shape(), 2.0); };
  const double d1 = ode_step(x, 0.5, 0.1, konst).data()[0] - x.data()[0];
  const double d2 = ode_step(x, 0.5, 0.05, konst).data()[0] - x.data()[0];
  CHECK_THAT(d2, WithinAbs(d1 / 2.0, 1e-15));
  CHECK_THROWS_AS(ode_step(x, 0.5, 0.0, konst), ValueError);
}

TEST_CASE("sde step without diffusion is the ode step bitwise", "[sampler]") {
  const NoDiffusion sched;
  const Tensor x = ddit::testing::random_tensor({3, 2}, 1, -2, 2, false);
  auto rngs = chain_rngs(5, 3);
  const VelocityFn v = [](const Tensor& y, double t) { return gaussian_velocity(y, t); };
  const Tensor a = em_sde_step(x, 0.6, 0.01, v, rngs, true, 1e-3, sched);
  const Tensor b = ode_step(x, 0.6, 0.01, v);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

  SampleConfig cfg = gaussian_cfg(SampleMode::kSde, 64, 50);
  const Tensor sde = integrate(v, 64, {1}, cfg, sched);
  cfg.mode = SampleMode::kOde;
  const Tensor ode = integrate(v, 64, {1}, cfg, sched);
  CHECK(std::equal(sde.data().begin(), sde.data().end(), ode.data().begin()));
}

TEST_CASE("sde step refuses to go below t_min", "[sampler]") {
  auto rngs = chain_rngs(0, 1);
  const VelocityFn v = [](const Tensor& y, double t) { return gaussian_velocity(y, t); };
  CHECK_THROWS_AS(em_sde_step(Tensor::zeros({1, 1}), 0.01, 0.02, v, rngs, true, 1e-3), ValueError);
}

TEST_CASE("Gaussian oracle: ode terminal law", "[sampler]") {
  const VelocityFn v = [](const Tensor& y, double t) { return gaussian_velocity(y, t); };
  const Tensor x = integrate(v, 4096, {1}, gaussian_cfg(SampleMode::kOde, 4096));
  const Moments m = moments(x);
  CHECK(m.var >= 0.9);
  CHECK(m.var <= 1.1);

  // Refinement: doubling the step count moves the estimate by far less than
  // the Monte-Carlo standard error sqrt(2/n) ~ 0.022.
  const Tensor fine = integrate(v, 4096, {1}, gaussian_cfg(SampleMode::kOde, 4096, 500));
  CHECK(std::abs(moments(fine).var - m.var) < 0.022);
}

TEST_CASE("Gaussian oracle: sde terminal law", "[sampler]") {
  const VelocityFn v = [](const Tensor& y, double t) { return gaussian_velocity(y, t); };
  const Tensor x = integrate(v, 8192, {1}, gaussian_cfg(SampleMode::kSde, 8192));
  const Moments m = moments(x);
  CHECK(m.var >= 0.85);
  CHECK(m.var <= 1.15);
  CHECK(std::abs(m.mean) <= 0.05);

  const Tensor again = integrate(v, 8192, {1}, gaussian_cfg(SampleMode::kSde, 8192));
  CHECK(std::equal(x.data().begin(), x.data().end(), again.data().begin()));
}

TEST_CASE("chains are independent of batch grouping", "[sampler]") {
  const VelocityFn v = [](const Tensor& y, double t) { return gaussian_velocity(y, t); };
  const Tensor big = integrate(v, 8, {1}, gaussian_cfg(SampleMode::kSde, 8, 20));
  const Tensor small = integrate(v, 3, {1}, gaussian_cfg(SampleMode::kSde, 3, 20));
  for (std::size_t i = 0; i < 3; ++i) CHECK(big.data()[i] == small.data()[i]);
}

TEST_CASE("model sampling", "[sampler]") {
  ModelConfig mc;
  mc.num_blocks = 2;
  mc.hidden_dim = 8;
  mc.num_heads = 2;
  mc.time_freq_dim = 8;
  mc.validate();
  const ModelParams params = init_model(mc);
  const auto before = params.named_parameters();
  std::vector<std::vector<double>> snapshot;
  for (const auto& [n, t] : before) snapshot.emplace_back(t->data().begin(), t->data().end());

  SampleConfig sc;
  sc.num_steps = 5;
  sc.num_samples = 6;
  sc.class_id = 2;
  const Tensor s = sample(params, mc, sc);
  CHECK(s.shape() == Shape{6, 2});
  for (double v : s.data()) CHECK(std::isfinite(v));

  sc.num_samples = 0;
  CHECK(sample(params, mc, sc).numel() == 0);

  // Guidance at 1 evaluates only the conditional branch.
  std::size_t calls = 0;
  const VelocityFn one = model_velocity(params, mc, 2, 1.0, &calls);
  (void)one(Tensor::zeros({4, 2}), 0.5);
  CHECK(calls == 1);
  calls = 0;
  const VelocityFn two = model_velocity(params, mc, 2, 1.5, &calls);
  (void)two(Tensor::zeros({4, 2}), 0.5);
  CHECK(calls == 2);
  CHECK_THROWS_AS(model_velocity(params, mc, 99, 1.0), ValueError);

  std::size_t k = 0;
  for (const auto& [n, t] : params.named_parameters()) {
    CHECK(std::equal(snapshot[k].begin(), snapshot[k].end(), t->data().begin()));
    ++k;
  }
}
