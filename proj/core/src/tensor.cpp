// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "ddit/errors.hpp"
#include "ddit/rng.hpp"

namespace ddit {

using detail::Node;
using detail::NodePtr;

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_finite(std::span<const double> data, const char* op) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

const Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ValueError("operation on an undefined tensor");
  return *t.node();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

std::size_t last_extent(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": needs rank >= 1");
  return x.shape().back();
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (ddit::numel(shape) != data.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " holds " +
                     std::to_string(ddit::numel(shape)) + " elements, got " +
                     std::to_string(data.size()));
  }
  check_finite(data, "Tensor::from");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ddit::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> d(ddit::numel(shape));
  for (auto& v : d) v = stddev * rng.normal();
  return from(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> d(ddit::numel(shape));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return from(std::move(shape), std::move(d), requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("Tensor::dim: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this).data.size(); }

std::span<const double> Tensor::data() const { return node_of(*this).data; }

double Tensor::item() const {
  const auto& n = node_of(*this);
  if (n.data.size() != 1) throw ShapeError("Tensor::item on a tensor of shape " + shape_str(n.shape));
  return n.data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& n = node_of(*this);
  if (index.size() != n.shape.size()) throw ShapeError("Tensor::at: rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= n.shape[axis]) throw ShapeError("Tensor::at: index out of range");
    flat = flat * n.shape[axis] + i;
    ++axis;
  }
  return n.data[flat];
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

bool Tensor::is_leaf() const { return node_of(*this).parents.empty(); }

const char* Tensor::op_name() const { return node_of(*this).op; }

Tensor Tensor::detach() const { return as_leaf(false); }

Tensor Tensor::as_leaf(bool requires_grad) const {
  const auto& n = node_of(*this);
  auto node = std::make_shared<Node>();
  node->shape = n.shape;
  node->data = n.data;
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, const char* op,
                           std::vector<Tensor> parents, detail::BackwardFn backward) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Backward

bool Gradients::has(const Tensor& leaf) const { return grads_.count(leaf.id()) != 0; }

std::span<const double> Gradients::of(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) return {};
  return it->second;
}

Tensor Gradients::tensor_of(const Tensor& leaf) const {
  auto g = of(leaf);
  if (g.empty()) return Tensor::zeros(leaf.shape());
  return Tensor::from(leaf.shape(), std::vector<double>(g.begin(), g.end()));
}

Gradients backward(const Tensor& root) {
  const Node& r = node_of(root);
  if (r.data.size() != 1 || !r.shape.empty()) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_str(r.shape));
  }
  Gradients out;
  if (!r.requires_grad) return out;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(&r, 0);
  visited.insert(&r);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      const Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, std::vector<double>> grads;
  grads[&r] = {1.0};
  std::vector<std::span<double>> parent_spans;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* n = *it;
    auto git = grads.find(n);
    if (git == grads.end()) continue;
    if (n->parents.empty()) continue;
    parent_spans.clear();
    for (const auto& p : n->parents) {
      if (!p->requires_grad) {
        parent_spans.emplace_back();
        continue;
      }
      auto& pg = grads[p.get()];
      if (pg.empty()) pg.assign(p->data.size(), 0.0);
      parent_spans.emplace_back(pg);
    }
    // Re-fetch: inserting parents may have rehashed the map.
    const auto& g = grads.at(n);
    n->backward(*n, g, parent_spans);
  }

  for (auto& [n, g] : grads) {
    if (n->parents.empty()) {
      check_finite(g, "backward");
      out.grads_.emplace(n, std::move(g));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Element-wise

namespace {

enum class Bcast { kNone, kLeftScalar, kRightScalar };

Bcast binary_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::kNone;
  if (a.numel() == 1 && a.rank() == 0) return Bcast::kLeftScalar;
  if (b.numel() == 1 && b.rank() == 0) return Bcast::kRightScalar;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()) + " (only scalar broadcasting is supported)");
}

// f(x, y) with partials dfx(x, y), dfy(x, y), supporting scalar operands.
template <class F, class Dx, class Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, Dx dfx, Dy dfy) {
  const Bcast mode = binary_mode(a, b, op);
  const Shape shape = mode == Bcast::kLeftScalar ? b.shape() : a.shape();
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = ddit::numel(shape);
  std::vector<double> out(n);
  auto ai = [&](std::size_t i) { return mode == Bcast::kLeftScalar ? ad[0] : ad[i]; };
  auto bi = [&](std::size_t i) { return mode == Bcast::kRightScalar ? bd[0] : bd[i]; };
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ai(i), bi(i));
  return Tensor::make_result(
      shape, std::move(out), op, {a, b},
      [mode, f, dfx, dfy](const Node& self, std::span<const double> g,
                          std::span<const std::span<double>> pg) {
        const auto& ad = self.parents[0]->data;
        const auto& bd = self.parents[1]->data;
        const std::size_t n = g.size();
        for (std::size_t i = 0; i < n; ++i) {
          const double x = mode == Bcast::kLeftScalar ? ad[0] : ad[i];
          const double y = mode == Bcast::kRightScalar ? bd[0] : bd[i];
          if (!pg[0].empty()) pg[0][mode == Bcast::kLeftScalar ? 0 : i] += g[i] * dfx(x, y);
          if (!pg[1].empty()) pg[1][mode == Bcast::kRightScalar ? 0 : i] += g[i] * dfy(x, y);
        }
      });
}

template <class F, class D>
Tensor unary(const Tensor& x, const char* op, F f, D df) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return Tensor::make_result(x.shape(), std::move(out), op, {x},
                             [df](const Node& self, std::span<const double> g,
                                  std::span<const std::span<double>> pg) {
                               const auto& xd = self.parents[0]->data;
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 pg[0][i] += g[i] * df(xd[i], self.data[i]);
                               }
                             });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor gelu(const Tensor& x) {
  static const double kC = std::sqrt(2.0 / std::numbers::pi);
  return unary(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + 0.044715 * v * v * v))); },
      [](double v, double) {
        const double u = kC * (v + 0.044715 * v * v * v);
        const double th = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
      });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::make_result({}, {s}, "sum", {x},
                             [](const Node&, std::span<const double> g,
                                std::span<const std::span<double>> pg) {
                               for (auto& v : pg[0]) v += g[0];
                             });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("sum_axis: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  const auto xd = x.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      const double* row = xd.data() + (o * len + k) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  return Tensor::make_result(out_shape, std::move(out), "sum_axis", {x},
                             [outer, inner, len](const Node&, std::span<const double> g,
                                                 std::span<const std::span<double>> pg) {
                               for (std::size_t o = 0; o < outer; ++o) {
                                 for (std::size_t k = 0; k < len; ++k) {
                                   double* dst = pg[0].data() + (o * len + k) * inner;
                                   const double* src = g.data() + o * inner;
                                   for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                                 }
                               }
                             });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("mean_axis: axis out of range");
  const std::size_t len = x.dim(axis);
  if (len == 0) throw ShapeError("mean_axis over an empty axis");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(len));
}

Tensor max_abs(const Tensor& x) {
  const auto xd = x.data();
  if (xd.empty()) throw ShapeError("max_abs of an empty tensor");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < xd.size(); ++i) {
    if (std::fabs(xd[i]) > std::fabs(xd[arg])) arg = i;
  }
  return Tensor::make_result({}, {std::fabs(xd[arg])}, "max_abs", {x},
                             [arg](const Node& self, std::span<const double> g,
                                   std::span<const std::span<double>> pg) {
                               const double v = self.parents[0]->data[arg];
                               pg[0][arg] += g[0] * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
                             });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  if (ddit::numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> d(x.data().begin(), x.data().end());
  return Tensor::make_result(std::move(shape), std::move(d), "reshape", {x},
                             [](const Node&, std::span<const double> g,
                                std::span<const std::span<double>> pg) {
                               for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
                             });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (order.size() != r) throw ShapeError("permute: order length != rank");
  std::vector<bool> seen(r, false);
  for (auto o : order) {
    if (o >= r || seen[o]) throw ShapeError("permute: invalid axis order");
    seen[o] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[order[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
  // Source offset for every destination element, reused by backward.
  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[order[i]];
    (*src)[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xd[(*src)[i]];
  return Tensor::make_result(std::move(out_shape), std::move(out), "permute", {x},
                             [src](const Node&, std::span<const double> g,
                                   std::span<const std::span<double>> pg) {
                               for (std::size_t i = 0; i < g.size(); ++i) pg[0][(*src)[i]] += g[i];
                             });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose: needs rank >= 2");
  std::vector<std::size_t> order(x.rank());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::swap(order[order.size() - 1], order[order.size() - 2]);
  return permute(x, order);
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || a.rank() != b.rank()) throw ShapeError("concat_last: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_last: leading extents differ " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
  }
  const std::size_t da = a.shape().back(), db = b.shape().back();
  const std::size_t rows = a.numel() / std::max<std::size_t>(da, 1);
  Shape shape = a.shape();
  shape.back() = da + db;
  std::vector<double> out(rows * (da + db));
  const auto ad = a.data(), bd = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ad.data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(bd.data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return Tensor::make_result(std::move(shape), std::move(out), "concat_last", {a, b},
                             [rows, da, db](const Node&, std::span<const double> g,
                                            std::span<const std::span<double>> pg) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* src = g.data() + r * (da + db);
                                 if (!pg[0].empty()) {
                                   for (std::size_t i = 0; i < da; ++i) pg[0][r * da + i] += src[i];
                                 }
                                 if (!pg[1].empty()) {
                                   for (std::size_t i = 0; i < db; ++i) pg[1][r * db + i] += src[da + i];
                                 }
                               }
                             });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  const std::size_t d = last_extent(x, "slice_last");
  if (start + length > d) throw ShapeError("slice_last: range exceeds last extent");
  const std::size_t rows = x.numel() / std::max<std::size_t>(d, 1);
  Shape shape = x.shape();
  shape.back() = length;
  std::vector<double> out(rows * length);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xd.data() + r * d + start, length, out.data() + r * length);
  }
  return Tensor::make_result(std::move(shape), std::move(out), "slice_last", {x},
                             [rows, d, start, length](const Node&, std::span<const double> g,
                                                      std::span<const std::span<double>> pg) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 for (std::size_t i = 0; i < length; ++i) {
                                   pg[0][r * d + start + i] += g[r * length + i];
                                 }
                               }
                             });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be [K, D]");
  const std::size_t k = table.dim(0), d = table.dim(1);
  auto idx = std::make_shared<std::vector<std::size_t>>(ids.begin(), ids.end());
  std::vector<double> out(idx->size() * d);
  const auto td = table.data();
  for (std::size_t r = 0; r < idx->size(); ++r) {
    if ((*idx)[r] >= k) throw ShapeError("gather_rows: index out of range");
    std::copy_n(td.data() + (*idx)[r] * d, d, out.data() + r * d);
  }
  return Tensor::make_result({idx->size(), d}, std::move(out), "gather_rows", {table},
                             [idx, d](const Node&, std::span<const double> g,
                                      std::span<const std::span<double>> pg) {
                               for (std::size_t r = 0; r < idx->size(); ++r) {
                                 for (std::size_t i = 0; i < d; ++i) {
                                   pg[0][(*idx)[r] * d + i] += g[r * d + i];
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto im = static_cast<Eigen::Index>(m), ik = static_cast<Eigen::Index>(k),
             in = static_cast<Eigen::Index>(n);
  MapM(c, im, in).noalias() += MapC(a, im, ik) * MapC(b, ik, in);
}

// c[m,k] += g[m,n] * b[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto im = static_cast<Eigen::Index>(m), ik = static_cast<Eigen::Index>(k),
             in = static_cast<Eigen::Index>(n);
  MapM(c, im, ik).noalias() += MapC(g, im, in) * MapC(b, ik, in).transpose();
}

// c[k,n] += a[m,k]^T * g[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  const auto im = static_cast<Eigen::Index>(m), ik = static_cast<Eigen::Index>(k),
             in = static_cast<Eigen::Index>(n);
  MapM(c, ik, in).noalias() += MapC(a, im, ik).transpose() * MapC(g, im, in);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor::make_result({m, n}, std::move(out), "matmul", {a, b},
                             [m, k, n](const Node& self, std::span<const double> g,
                                       std::span<const std::span<double>> pg) {
                               const double* ad = self.parents[0]->data.data();
                               const double* bd = self.parents[1]->data.data();
                               if (!pg[0].empty()) gemm_nt(g.data(), bd, pg[0].data(), m, k, n);
                               if (!pg[1].empty()) gemm_tn(ad, g.data(), pg[1].data(), m, k, n);
                             });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3) throw ShapeError("bmm: operands must be rank 3");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ShapeError("bmm: extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n, m,
            k, n);
  }
  return Tensor::make_result({batch, m, n}, std::move(out), "bmm", {a, b},
                             [batch, m, k, n](const Node& self, std::span<const double> g,
                                              std::span<const std::span<double>> pg) {
                               const double* ad = self.parents[0]->data.data();
                               const double* bd = self.parents[1]->data.data();
                               for (std::size_t i = 0; i < batch; ++i) {
                                 const double* gi = g.data() + i * m * n;
                                 if (!pg[0].empty()) {
                                   gemm_nt(gi, bd + i * k * n, pg[0].data() + i * m * k, m, k, n);
                                 }
                                 if (!pg[1].empty()) {
                                   gemm_tn(ad + i * m * k, gi, pg[1].data() + i * k * n, m, k, n);
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Explicit broadcasts

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t d = last_extent(x, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != d) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / std::max<std::size_t>(d, 1);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] += bd[i];
  }
  return Tensor::make_result(x.shape(), std::move(out), "add_bias", {x, bias},
                             [rows, d](const Node&, std::span<const double> g,
                                       std::span<const std::span<double>> pg) {
                               if (!pg[0].empty()) {
                                 for (std::size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
                               }
                               if (!pg[1].empty()) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t i = 0; i < d; ++i) pg[1][i] += g[r * d + i];
                                 }
                               }
                             });
}

Tensor expand_mid(const Tensor& v, std::size_t count) {
  if (v.rank() != 2) throw ShapeError("expand_mid: expects [N, D]");
  const std::size_t n = v.dim(0), d = v.dim(1);
  std::vector<double> out(n * count * d);
  const auto vd = v.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < count; ++t) {
      std::copy_n(vd.data() + i * d, d, out.data() + (i * count + t) * d);
    }
  }
  return Tensor::make_result({n, count, d}, std::move(out), "expand_mid", {v},
                             [n, count, d](const Node&, std::span<const double> g,
                                           std::span<const std::span<double>> pg) {
                               for (std::size_t i = 0; i < n; ++i) {
                                 for (std::size_t t = 0; t < count; ++t) {
                                   for (std::size_t k = 0; k < d; ++k) {
                                     pg[0][i * d + k] += g[(i * count + t) * d + k];
                                   }
                                 }
                               }
                             });
}

// ---------------------------------------------------------------------------
// Normalisation

Tensor softmax_last(const Tensor& x) {
  const std::size_t d = last_extent(x, "softmax_last");
  if (d == 0) throw ShapeError("softmax_last: empty last axis");
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < d; ++i) o[i] /= s;
  }
  return Tensor::make_result(x.shape(), std::move(out), "softmax_last", {x},
                             [rows, d](const Node& self, std::span<const double> g,
                                       std::span<const std::span<double>> pg) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double* y = self.data.data() + r * d;
                                 const double* gr = g.data() + r * d;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < d; ++i) dot += gr[i] * y[i];
                                 for (std::size_t i = 0; i < d; ++i) {
                                   pg[0][r * d + i] += y[i] * (gr[i] - dot);
                                 }
                               }
                             });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = last_extent(x, "layer_norm");
  if (d == 0) throw ShapeError("layer_norm: empty last axis");
  if (!(eps > 0.0)) throw ValueError("layer_norm: eps must be positive");
  const bool has_gain = gain.defined(), has_bias = bias.defined();
  if (has_gain && (gain.rank() != 1 || gain.dim(0) != d)) throw ShapeError("layer_norm: gain shape");
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != d)) throw ShapeError("layer_norm: bias shape");
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += in[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (in[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * (has_gain ? gain.data()[i] : 1.0) + (has_bias ? bias.data()[i] : 0.0);
    }
  }
  std::vector<Tensor> parents{x};
  if (has_gain) parents.push_back(gain);
  if (has_bias) parents.push_back(bias);
  return Tensor::make_result(
      x.shape(), std::move(out), "layer_norm", std::move(parents),
      [rows, d, has_gain, has_bias, xhat, inv_std](const Node& self, std::span<const double> g,
                                                   std::span<const std::span<double>> pg) {
        const double* gn = has_gain ? self.parents[1]->data.data() : nullptr;
        const std::size_t gain_slot = 1;
        const std::size_t bias_slot = has_gain ? 2 : 1;
        std::vector<double> gh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * d;
          const double* h = xhat->data() + r * d;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            gh[i] = gr[i] * (gn ? gn[i] : 1.0);
            m1 += gh[i];
            m2 += gh[i] * h[i];
          }
          m1 /= static_cast<double>(d);
          m2 /= static_cast<double>(d);
          if (!pg[0].empty()) {
            for (std::size_t i = 0; i < d; ++i) {
              pg[0][r * d + i] += (*inv_std)[r] * (gh[i] - m1 - h[i] * m2);
            }
          }
          if (has_gain && !pg[gain_slot].empty()) {
            for (std::size_t i = 0; i < d; ++i) pg[gain_slot][i] += gr[i] * h[i];
          }
          if (has_bias && !pg[bias_slot].empty()) {
            for (std::size_t i = 0; i < d; ++i) pg[bias_slot][i] += gr[i];
          }
        }
      });
}

Tensor l2_normalize(const Tensor& x, double eps) {
  const std::size_t d = last_extent(x, "l2_normalize");
  if (!(eps > 0.0)) throw ValueError("l2_normalize: eps must be positive");
  const std::size_t rows = d == 0 ? 0 : x.numel() / d;
  const auto xd = x.data();
  auto norms = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += xd[r * d + i] * xd[r * d + i];
    const double nrm = std::sqrt(s);
    (*norms)[r] = nrm;
    const double den = std::max(nrm, eps);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = xd[r * d + i] / den;
  }
  return Tensor::make_result(x.shape(), std::move(out), "l2_normalize", {x},
                             [rows, d, eps, norms](const Node& self, std::span<const double> g,
                                                   std::span<const std::span<double>> pg) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 const double nrm = (*norms)[r];
                                 const double* y = self.data.data() + r * d;
                                 const double* gr = g.data() + r * d;
                                 if (nrm > eps) {
                                   double dot = 0.0;
                                   for (std::size_t i = 0; i < d; ++i) dot += y[i] * gr[i];
                                   for (std::size_t i = 0; i < d; ++i) {
                                     pg[0][r * d + i] += (gr[i] - y[i] * dot) / nrm;
                                   }
                                 } else {
                                   for (std::size_t i = 0; i < d; ++i) pg[0][r * d + i] += gr[i] / eps;
                                 }
                               }
                             });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape(a, b, "cosine_similarity");
  return sum_axis(mul(l2_normalize(a, eps), l2_normalize(b, eps)), a.rank() - 1);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be [in, out]");
  const std::size_t in = last_extent(x, "linear");
  if (weight.dim(0) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = weight.dim(1);
  Tensor y = matmul(reshape(x, {x.numel() / std::max<std::size_t>(in, 1), in}), weight);
  if (bias.defined()) y = add_bias(y, bias);
  return reshape(y, std::move(out_shape));
}

}  // namespace ddit
