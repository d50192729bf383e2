// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "ddit/errors.hpp"
#include "ddit/tensor.hpp"
#include "test_support.hpp"

using namespace ddit;
using ddit::testing::gradcheck;
using ddit::testing::random_tensor;
using Catch::Matchers::WithinAbs;

namespace {
using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
constexpr double kGradTol = 1e-5;
}  // namespace

TEST_CASE("matmul: identity and direct double sum", "[tensor]") {
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor p = matmul(a, eye);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 2, 3, 4});

  const Tensor r = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r.item() == 11.0);
}

TEST_CASE("matmul: gradient of the sum w.r.t. the first operand", "[tensor]") {
  const Tensor a = Tensor::from({1, 2}, {1, 2}, true);
  const Tensor b = Tensor::from({2, 1}, {3, 4});
  const Gradients g = backward(sum(matmul(a, b)));
  CHECK_THAT(g.of(a)[0], WithinAbs(3.0, 1e-12));
  CHECK_THAT(g.of(a)[1], WithinAbs(4.0, 1e-12));

  // Same answer from the finite-difference oracle.
  const auto numeric = ddit::testing::numeric_grad(
      [](const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])).item(); }, {a, b}, 0);
  CHECK_THAT(numeric[0], WithinAbs(3.0, 1e-8));
  CHECK_THAT(numeric[1], WithinAbs(4.0, 1e-8));
}

TEST_CASE("matmul: inner extent mismatch is a shape error", "[tensor]") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("layer_norm: examples", "[tensor]") {
  const Tensor one = Tensor::full({3}, 1.0), zero = Tensor::zeros({3});
  const Tensor c = layer_norm(Tensor::from({1, 3}, {5, 5, 5}), one, zero, 1e-6);
  for (double v : c.data()) CHECK_THAT(v, WithinAbs(0.0, 1e-12));

  const Tensor r = layer_norm(Tensor::from({1, 2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12);
  CHECK_THAT(r.data()[0], WithinAbs(-1.0, 1e-9));
  CHECK_THAT(r.data()[1], WithinAbs(1.0, 1e-9));
}

TEST_CASE("layer_norm: gradient matches finite differences", "[tensor][grad]") {
  const Tensor x = random_tensor({2, 4}, 1);
  const Tensor gain = random_tensor({4}, 2);
  const Tensor bias = random_tensor({4}, 3);
  const Tensor w = random_tensor({2, 4}, 4, -2, 2, false);
  const Fn f = [&w](const std::vector<Tensor>& in) { return sum(mul(layer_norm(in[0], in[1], in[2]), w)); };
  CHECK(gradcheck(f, {x, gain, bias}) <= 1e-6);
}

TEST_CASE("l2_normalize: examples", "[tensor]") {
  const Tensor v = l2_normalize(Tensor::from({2}, {3, 4}), 1e-12);
  CHECK_THAT(v.data()[0], WithinAbs(0.6, 1e-15));
  CHECK_THAT(v.data()[1], WithinAbs(0.8, 1e-15));
  const Tensor z = l2_normalize(Tensor::zeros({3}), 1e-8);
  for (double e : z.data()) CHECK(e == 0.0);
  const Tensor u = l2_normalize(Tensor::from({3}, {0, 1, 0}), 1e-12);
  CHECK(u.data()[1] == 1.0);
}

TEST_CASE("backward: scalar calculus and root checks", "[tensor]") {
  const Tensor x = Tensor::scalar(3.0, true);
  CHECK(backward(square(x)).of(x)[0] == 6.0);
  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), ShapeError);
}

TEST_CASE("backward: silu sum matches finite differences", "[tensor][grad]") {
  const Tensor x = random_tensor({8}, 11);
  CHECK(gradcheck([](const std::vector<Tensor>& in) { return sum(silu(in[0])); }, {x}) <= 1e-6);
}

TEST_CASE("backward: independent graphs do not interfere", "[tensor]") {
  const Tensor a = random_tensor({5}, 21);
  const Tensor b = random_tensor({5}, 22);
  const auto ga_alone = backward(sum(square(a))).tensor_of(a);
  const auto gb_alone = backward(sum(silu(b))).tensor_of(b);
  const Tensor ra = sum(square(a));
  const Tensor rb = sum(silu(b));
  const auto ga = backward(ra).tensor_of(a);
  const auto gb = backward(rb).tensor_of(b);
  CHECK(std::equal(ga.data().begin(), ga.data().end(), ga_alone.data().begin()));
  CHECK(std::equal(gb.data().begin(), gb.data().end(), gb_alone.data().begin()));
  // Repeated sweeps over the same graph give the same answer.
  const auto ga2 = backward(ra).tensor_of(a);
  CHECK(std::equal(ga.data().begin(), ga.data().end(), ga2.data().begin()));
}

TEST_CASE("every differentiable op agrees with central differences", "[tensor][grad]") {
  const Tensor x = random_tensor({2, 3}, 31);
  const Tensor y = random_tensor({2, 3}, 32);
  const Tensor pos = random_tensor({2, 3}, 33, 0.5, 2.0);
  const Tensor w = random_tensor({2, 3}, 34, -2, 2, false);
  // Weighted sums keep the check sensitive to every output element.
  const auto wsum = [&w](const Tensor& t) { return sum(mul(t, w)); };

  struct Case {
    const char* name;
    Fn f;
    std::vector<Tensor> in;
  };
  const std::vector<Case> cases = {
      {"add", [&](auto& in) { return wsum(add(in[0], in[1])); }, {x, y}},
      {"sub", [&](auto& in) { return wsum(sub(in[0], in[1])); }, {x, y}},
      {"mul", [&](auto& in) { return wsum(mul(in[0], in[1])); }, {x, y}},
      {"div", [&](auto& in) { return wsum(div(in[0], in[1])); }, {x, pos}},
      {"div_scalar", [&](auto& in) { return sum(div(in[0], sum(in[1]))); }, {x, pos}},
      {"neg", [&](auto& in) { return wsum(neg(in[0])); }, {x}},
      {"scale", [&](auto& in) { return wsum(scale(in[0], -1.7)); }, {x}},
      {"add_scalar", [&](auto& in) { return sum(square(add_scalar(in[0], 0.3))); }, {x}},
      {"square", [&](auto& in) { return wsum(square(in[0])); }, {x}},
      {"sqrt", [&](auto& in) { return wsum(sqrt(in[0])); }, {pos}},
      {"abs", [&](auto& in) { return wsum(abs(in[0])); }, {x}},
      {"silu", [&](auto& in) { return wsum(silu(in[0])); }, {x}},
      {"gelu", [&](auto& in) { return wsum(gelu(in[0])); }, {x}},
      {"mean", [&](auto& in) { return square(mean(in[0])); }, {x}},
      {"sum_axis0", [&](auto& in) { return sum(square(sum_axis(in[0], 0))); }, {x}},
      {"mean_axis1", [&](auto& in) { return sum(square(mean_axis(in[0], 1))); }, {x}},
      {"max_abs", [&](auto& in) { return max_abs(in[0]); }, {x}},
      {"reshape", [&](auto& in) { return sum(mul(reshape(in[0], {3, 2}), reshape(w, {3, 2}))); }, {x}},
      {"transpose", [&](auto& in) { return sum(square(matmul(transpose(in[0]), in[1]))); }, {x, y}},
      {"permute",
       [&](auto& in) {
         const Tensor t = reshape(in[0], {1, 2, 3});
         return sum(mul(permute(t, {2, 0, 1}), reshape(transpose(w), {3, 1, 2})));
       },
       {x}},
      {"concat_last", [&](auto& in) { return sum(square(concat_last(in[0], in[1]))); }, {x, y}},
      {"slice_last", [&](auto& in) { return sum(square(slice_last(in[0], 1, 2))); }, {x}},
      {"gather_rows",
       [&](auto& in) {
         const std::vector<std::size_t> ids{1, 0, 1};
         return sum(square(gather_rows(in[0], ids)));
       },
       {x}},
      {"matmul", [&](auto& in) { return sum(square(matmul(in[0], transpose(in[1])))); }, {x, y}},
      {"bmm",
       [&](auto& in) {
         return sum(square(bmm(reshape(in[0], {2, 1, 3}), reshape(in[1], {2, 3, 1}))));
       },
       {x, y}},
      {"add_bias",
       [&](auto& in) { return wsum(square(add_bias(in[0], slice_last(reshape(in[1], {6}), 0, 3)))); },
       {x, y}},
      {"expand_mid", [&](auto& in) { return sum(square(expand_mid(in[0], 3))); }, {x}},
      {"softmax_last", [&](auto& in) { return wsum(softmax_last(in[0])); }, {x}},
      {"layer_norm_no_affine", [&](auto& in) { return wsum(layer_norm(in[0], Tensor(), Tensor())); }, {x}},
      {"l2_normalize", [&](auto& in) { return wsum(l2_normalize(in[0])); }, {x}},
      {"cosine_similarity", [&](auto& in) { return sum(cosine_similarity(in[0], in[1])); }, {x, y}},
      {"linear",
       [&](auto& in) {
         return sum(square(linear(in[0], reshape(in[1], {3, 2}), Tensor::from({2}, {0.1, -0.2}))));
       },
       {x, y}},
  };
  for (const auto& c : cases) {
    INFO(c.name);
    CHECK(gradcheck(c.f, c.in) <= kGradTol);
  }
}

TEST_CASE("softmax rows are probability vectors", "[tensor]") {
  const Tensor p = softmax_last(random_tensor({4, 7}, 41, -30, 30, false));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += p.data()[r * 7 + c];
    CHECK_THAT(s, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("non-finite results raise instead of propagating", "[tensor]") {
  const Tensor zero = Tensor::zeros({2});
  CHECK_THROWS_AS(div(Tensor::full({2}, 1.0), zero), NumericError);
  CHECK_THROWS_AS(sqrt(Tensor::from({1}, {-1.0})), NumericError);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(add(Tensor::from({1}, {inf}), Tensor::from({1}, {1.0})), NumericError);
}

TEST_CASE("shape checks: no implicit broadcasting", "[tensor]") {
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  // Scalar-with-tensor is the one allowed broadcast.
  CHECK(add(Tensor::zeros({2, 3}), Tensor::scalar(1.0)).shape() == Shape{2, 3});
}

TEST_CASE("ops never mutate their inputs", "[tensor]") {
  const Tensor x = random_tensor({3, 3}, 51);
  const std::vector<double> before(x.data().begin(), x.data().end());
  (void)backward(sum(square(layer_norm(softmax_last(x), Tensor(), Tensor()))));
  CHECK(std::equal(before.begin(), before.end(), x.data().begin()));
}

TEST_CASE("seeded random tensors are bitwise reproducible", "[tensor]") {
  Rng a(9, 1), b(9, 1);
  const Tensor ta = Tensor::randn({16}, a);
  const Tensor tb = Tensor::randn({16}, b);
  CHECK(std::equal(ta.data().begin(), ta.data().end(), tb.data().begin()));
}
