// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major float64 tensors with a tape-free reverse-mode autodiff graph.
//
// A Tensor is an immutable value: operations never modify their inputs, they
// return new tensors whose nodes point back at the operands. Only nodes that
// (transitively) depend on a grad-enabled leaf record a backward closure, so
// inference-only code pays nothing for the graph.
//
// Broadcasting is deliberately absent except for scalar-with-tensor in the
// binary element-wise operations. Row/token broadcasts that the model needs
// are explicit operations (add_bias, expand_mid).

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ddit {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Called once per node during backward. `parent_grads[i]` is empty when
// parent i does not require a gradient; otherwise the closure accumulates
// (+=) into it.
using BackwardFn = std::function<void(const Node& self, std::span<const double> grad_out,
                                      std::span<const std::span<double>> parent_grads)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  BackwardFn backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::span<const double> data() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;
  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;

  // Same values, no graph history, gradients disabled.
  Tensor detach() const;
  // Fresh leaf with the same values and the given grad flag.
  Tensor as_leaf(bool requires_grad = true) const;

  // Identity used as the key in the gradient map.
  const void* id() const { return node_.get(); }

  // Used by operation implementations.
  static Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                            std::vector<Tensor> parents, detail::BackwardFn backward);
  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

/// Gradients of a scalar root w.r.t. every grad-enabled leaf reachable from it.
class Gradients {
 public:
  bool has(const Tensor& leaf) const;
  // Zero-length span when the leaf did not participate.
  std::span<const double> of(const Tensor& leaf) const;
  // Copy of the gradient as a (non-grad) tensor of the leaf's shape; zeros
  // when the leaf did not participate.
  Tensor tensor_of(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tensor& root);
  std::unordered_map<const void*, std::vector<double>> grads_;
};

/// Reverse-mode sweep from a scalar root. Throws ShapeError if the root is
/// not a scalar.
Gradients backward(const Tensor& root);

// ---- element-wise (shapes must match, or one side must be a scalar) -------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor silu(const Tensor& x);
// tanh approximation of GELU.
Tensor gelu(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }
inline Tensor operator*(const Tensor& x, double f) { return scale(x, f); }
inline Tensor operator*(double f, const Tensor& x) { return scale(x, f); }

// ---- reductions -----------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
// max_k |x_k| over all elements, as a scalar. Subgradient goes to the first
// maximiser.
Tensor max_abs(const Tensor& x);

// ---- layout ---------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);
// Rows of a [K, D] table selected by index, giving [ids.size(), D].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

// ---- linear algebra -------------------------------------------------------
// [m, k] x [k, n] -> [m, n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [B, m, k] x [B, k, n] -> [B, m, n]
Tensor bmm(const Tensor& a, const Tensor& b);

// ---- explicit broadcasts --------------------------------------------------
// x[..., D] + bias[D]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// v[N, D] -> [N, T, D] by repeating each row T times.
Tensor expand_mid(const Tensor& v, std::size_t count);

// ---- normalisation / attention helpers ------------------------------------
Tensor softmax_last(const Tensor& x);
// Per-last-axis standardisation with population variance, then the optional
// affine (pass undefined tensors to skip gain and/or bias).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);
// Each last-axis vector divided by max(||v||_2, eps).
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);
// Cosine similarity along the last axis: result drops that axis.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);

// x[..., in] @ weight[in, out] (+ bias[out]); leading axes are flattened.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace ddit
