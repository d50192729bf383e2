// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "ddit/errors.hpp"
#include "ddit/losses.hpp"
#include "loss_oracles.hpp"
#include "test_support.hpp"

using namespace ddit;
using ddit::testing::RawBlock;
using Catch::Matchers::WithinAbs;

namespace {

FeatureStack random_stack(std::size_t blocks, Shape shape, std::uint64_t seed, bool grad = false) {
  FeatureStack f;
  for (std::size_t b = 0; b < blocks; ++b) f.push_back(ddit::testing::random_tensor(shape, seed * 100 + b, -2, 2, grad));
  return f;
}

std::vector<RawBlock> raw(const FeatureStack& f) {
  std::vector<RawBlock> out;
  for (const auto& t : f) out.push_back({t.dim(0), t.dim(1), t.dim(2), {t.data().begin(), t.data().end()}});
  return out;
}

Tensor tokens(std::vector<double> v, std::size_t n, std::size_t t, std::size_t d) {
  return Tensor::from({n, t, d}, std::move(v));
}

}  // namespace

TEST_CASE("pair selection", "[losses]") {
  const PairSet full = select_pairs(6, 6, 1);
  CHECK(full.blocks.size() == 6);
  CHECK(full.pairs.size() == 15);
  for (auto [i, j] : full.pairs) CHECK(i < j);

  const PairSet a = select_pairs(12, 10, 7), b = select_pairs(12, 10, 7);
  CHECK(a.blocks == b.blocks);
  CHECK(a.pairs == b.pairs);
  CHECK(a.pairs.size() == 45);
  for (auto k : a.blocks) CHECK(k < 12);
  CHECK_THROWS_AS(select_pairs(4, 5, 0), ValueError);
  CHECK_THROWS_AS(select_pairs(4, 1, 0), ValueError);
}

TEST_CASE("block mean examples", "[losses]") {
  const Tensor ones = block_mean(Tensor::full({2, 3, 4}, 1.0));
  CHECK(ones.shape() == Shape{4});
  for (double v : ones.data()) CHECK(v == 1.0);
  const Tensor single = block_mean(tokens({3, -1}, 1, 1, 2));
  CHECK(single.data()[0] == 3.0);
  CHECK(single.data()[1] == -1.0);
  const Tensor two = block_mean(tokens({1, 0, 0, 1}, 1, 2, 2));
  CHECK(two.data()[0] == 0.5);
  CHECK(two.data()[1] == 0.5);
}

TEST_CASE("orth loss hits its analytic extremes", "[losses]") {
  const PairSet p = make_pair_set({0, 1});
  const Tensor f = tokens({1, 2, 3, 4}, 1, 2, 2);
  CHECK(orth_loss({f, f}, p).item() == 1.0);
  CHECK(orth_loss({tokens({1, 0}, 1, 1, 2), tokens({0, 3}, 1, 1, 2)}, p).item() == 0.0);
  CHECK(orth_loss({f, scale(f, -1.0)}, p).item() == -1.0);
  // Identical features in every block of a larger stack.
  const PairSet p3 = make_pair_set({0, 1, 2});
  CHECK_THAT(orth_loss({f, f, f}, p3).item(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("mi loss examples and oracle", "[losses]") {
  const PairSet p = make_pair_set({0, 1});
  const Tensor f = ddit::testing::random_tensor({2, 3, 4}, 3, -2, 2, false);
  CHECK_THAT(mi_loss({f, f}, p).item(), WithinAbs(1.0, 1e-15));
  CHECK_THAT(mi_loss({f, neg(f)}, p).item(), WithinAbs(-1.0, 1e-15));

  const FeatureStack small = random_stack(2, {2, 2, 3}, 4);
  CHECK_THAT(mi_loss(small, p).item(), WithinAbs(ddit::testing::oracle_mi(raw(small), p.pairs), 1e-12));

  for (std::uint64_t seed : {5, 6, 7}) {
    const FeatureStack s = random_stack(3, {2, 3, 5}, seed);
    const PairSet all = make_pair_set({0, 1, 2});
    CHECK_THAT(mi_loss(s, all).item(), WithinAbs(ddit::testing::oracle_mi(raw(s), all.pairs), 1e-12));
    CHECK_THAT(orth_loss(s, all).item(), WithinAbs(ddit::testing::oracle_orth(raw(s), all.pairs), 1e-12));
  }
}

TEST_CASE("disp loss examples and oracle", "[losses]") {
  const PairSet p = make_pair_set({0, 1});
  // Every column has the same normalised mean: zero variance.
  const Tensor flat = Tensor::full({1, 4, 3}, 2.0);
  CHECK_THAT(disp_loss({flat, flat}, p).item(), WithinAbs(0.0, 1e-15));

  const FeatureStack two = random_stack(2, {1, 4, 2}, 8);
  CHECK_THAT(disp_loss(two, p).item(), WithinAbs(ddit::testing::oracle_disp(raw(two), p.pairs), 1e-12));

  for (std::uint64_t seed : {9, 10, 11}) {
    const FeatureStack s = random_stack(3, {2, 3, 5}, seed);
    const PairSet all = make_pair_set({0, 1, 2});
    const double v = disp_loss(s, all).item();
    CHECK(v <= 0.0);
    CHECK_THAT(v, WithinAbs(ddit::testing::oracle_disp(raw(s), all.pairs), 1e-12));
  }
  CHECK_THROWS_AS(disp_loss({Tensor::full({2, 2, 1}, 1.0), Tensor::full({2, 2, 1}, 1.0)}, p), ValueError);
}

TEST_CASE("loss ranges, order independence and scale invariance", "[losses]") {
  const FeatureStack s = random_stack(4, {3, 2, 6}, 12);
  const PairSet p = make_pair_set({0, 1, 2, 3});
  PairSet shuffled = p;
  std::reverse(shuffled.pairs.begin(), shuffled.pairs.end());
  const double orth = orth_loss(s, p).item(), mi = mi_loss(s, p).item();
  CHECK(orth >= -1.0);
  CHECK(orth <= 1.0);
  CHECK(mi >= -1.0);
  CHECK(mi <= 1.0);
  CHECK_THAT(orth_loss(s, shuffled).item(), WithinAbs(orth, 1e-15));
  CHECK_THAT(mi_loss(s, shuffled).item(), WithinAbs(mi, 1e-15));
  CHECK_THAT(disp_loss(s, shuffled).item(), WithinAbs(disp_loss(s, p).item(), 1e-15));

  FeatureStack scaled;
  for (const auto& f : s) scaled.push_back(scale(f, 4.25));
  CHECK_THAT(orth_loss(scaled, p).item(), WithinAbs(orth, 1e-10));
  CHECK_THAT(mi_loss(scaled, p).item(), WithinAbs(mi, 1e-10));
}

TEST_CASE("diversity loss composition", "[losses]") {
  const FeatureStack s = random_stack(3, {2, 2, 4}, 13);
  const PairSet p = make_pair_set({0, 1, 2});
  DiversityConfig cfg;
  const DiversityTerms d = diversity_loss(s, cfg, p);
  const double expect = 0.33 * orth_loss(s, p).item() + 0.33 * mi_loss(s, p).item() + 0.33 * disp_loss(s, p).item();
  CHECK_THAT(d.total.item(), WithinAbs(expect, 1e-12));

  cfg.lambda_orth = cfg.lambda_mi = cfg.lambda_disp = 0.0;
  CHECK(diversity_loss(s, cfg, p).total.item() == 0.0);

  // Components (1, 1, 0) with default weights: identical blocks with constant
  // columns give orth = mi = 1 and zero dispersion variance.
  const Tensor f = Tensor::full({1, 2, 3}, 1.0);
  const DiversityTerms same = diversity_loss({f, f}, DiversityConfig{}, make_pair_set({0, 1}));
  CHECK_THAT(same.total.item(), WithinAbs(0.66, 1e-12));
}

TEST_CASE("adaptive weight is the literal piecewise schedule", "[losses]") {
  CHECK(adaptive_weight(0.6) == 1.0);
  CHECK(adaptive_weight(0.5) == 0.8);
  // The double nearest 0.3 lies below 0.3, so the exact value of the formula
  // there is the double just below 0.4.
  const auto exact = [](double x) {
    return static_cast<double>((static_cast<long double>(x) - static_cast<long double>(0.1)) / 0.5L);
  };
  CHECK(adaptive_weight(0.3) == exact(0.3));
  CHECK(adaptive_weight(0.3) == std::nextafter(0.4, 0.0));
  CHECK(adaptive_weight(0.45) == exact(0.45));
  CHECK(adaptive_weight(0.1) == 0.0);
  CHECK(adaptive_weight(-0.2) == 0.0);
  CHECK_THROWS_AS(adaptive_weight(0.3, 0.5, 0.5), ValueError);
}

TEST_CASE("flow matching loss", "[losses]") {
  const Tensor x = ddit::testing::random_tensor({2, 2}, 14, -2, 2, false);
  const Tensor e = ddit::testing::random_tensor({2, 2}, 15, -2, 2, false);
  const std::vector<double> t{0.2, 0.8};
  const Tensor target = sub(e, x);
  CHECK(flow_matching_loss(target, x, e, t).item() == 0.0);
  CHECK_THAT(flow_matching_loss(add_scalar(target, 0.25), x, e, t).item(), WithinAbs(0.0625, 1e-15));

  const Tensor v = ddit::testing::random_tensor({2, 2}, 16);
  const auto f = [&](const std::vector<Tensor>& in) { return flow_matching_loss(in[0], x, e, t); };
  CHECK(ddit::testing::gradcheck(f, {v}) <= 1e-6);
}

TEST_CASE("alignment loss examples", "[losses]") {
  const Tensor y = ddit::testing::random_tensor({2, 3, 4}, 17, -2, 2, false);
  CHECK_THAT(alignment_loss_from_projection(y, y).item(), WithinAbs(-1.0, 1e-15));
  const Tensor a = tokens({1, 0, 0, 2}, 1, 2, 2);
  const Tensor b = tokens({0, 5, -3, 0}, 1, 2, 2);
  CHECK(alignment_loss_from_projection(a, b).item() == 0.0);
  CHECK_THROWS_AS(alignment_loss_from_projection(y, ddit::testing::random_tensor({2, 2, 4}, 18)), ShapeError);
  CHECK(LossWeights{}.alignment_coef == 0.5);
}

TEST_CASE("loss component gradients match central differences", "[losses][grad]") {
  const PairSet p = make_pair_set({0, 1, 2});
  const FeatureStack s = random_stack(3, {2, 2, 3}, 19, true);
  const std::vector<Tensor> in(s.begin(), s.end());
  const auto as_stack = [](const std::vector<Tensor>& v) { return FeatureStack(v.begin(), v.end()); };
  CHECK(ddit::testing::gradcheck([&](const auto& v) { return orth_loss(as_stack(v), p); }, in) <= 1e-5);
  CHECK(ddit::testing::gradcheck([&](const auto& v) { return mi_loss(as_stack(v), p); }, in) <= 1e-5);
  CHECK(ddit::testing::gradcheck([&](const auto& v) { return disp_loss(as_stack(v), p); }, in) <= 1e-5);

  Rng rng(4);
  const Projector proj = init_projector(3, 5, 4, rng);
  const Tensor targets = ddit::testing::random_tensor({2, 2, 4}, 20, -2, 2, false);
  CHECK(ddit::testing::gradcheck([&](const auto& v) { return alignment_loss(v[0], proj, targets); }, {in[0]}) <= 1e-5);
}

TEST_CASE("total loss composition", "[losses]") {
  const Tensor x = ddit::testing::random_tensor({2, 1, 3}, 21, -2, 2, false);
  const Tensor e = ddit::testing::random_tensor({2, 1, 3}, 22, -2, 2, false);
  const Tensor v = ddit::testing::random_tensor({2, 1, 3}, 23);
  const std::vector<double> t{0.3, 0.6};
  const FeatureStack f = random_stack(3, {2, 1, 3}, 24, true);
  const PairSet p = make_pair_set({0, 1, 2});

  LossWeights off;
  off.diversity = false;
  const LossBreakdown plain = total_loss(v, x, e, t, f, p, off);
  CHECK(plain.total.item() == plain.l_fm);

  // In the zero-weight region the gradients equal the diversity-free ones.
  LossWeights zero;
  zero.fixed_weight = 0.0;
  const LossBreakdown z = total_loss(v, x, e, t, f, p, zero);
  CHECK(z.w == 0.0);
  const Gradients g0 = backward(plain.total), g1 = backward(z.total);
  const auto a = g0.tensor_of(v), b = g1.tensor_of(v);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  for (const auto& blk : f) CHECK(!g1.has(blk));

  LossWeights on;
  on.fixed_weight = 0.7;
  const LossBreakdown full = total_loss(v, x, e, t, f, p, on);
  CHECK_THAT(full.total.item(), WithinAbs(full.l_fm + 0.7 * full.l_div, 1e-12));
  CHECK(full.l_div == diversity_loss(f, DiversityConfig{}, p).total.item());
}
