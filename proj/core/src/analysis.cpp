// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ddit/container.hpp"
#include "ddit/errors.hpp"
#include "ddit/rng.hpp"

namespace ddit {

FeatureMatrix feature_matrix(const Tensor& block) {
  if (block.rank() != 3) throw ShapeError("feature_matrix: expects [N, T, D]");
  FeatureMatrix m(block.dim(0) * block.dim(1), block.dim(2));
  const auto d = block.data();
  std::copy(d.begin(), d.end(), m.values.begin());
  return m;
}

std::string Kernel::name() const {
  switch (kind) {
    case Kind::kLinear:
      return "linear";
    case Kind::kRbf:
      return "rbf";
    case Kind::kPolynomial:
      return "polynomial" + std::to_string(degree);
  }
  return "?";
}

Kernel parse_kernel(const std::string& name) {
  if (name == "linear") return Kernel::linear();
  if (name == "rbf") return Kernel::rbf();
  if (name.rfind("polynomial", 0) == 0) {
    const std::string deg = name.substr(10);
    return Kernel::polynomial(deg.empty() ? 2 : std::stoi(deg));
  }
  throw ValueError("unknown kernel '" + name + "'");
}

namespace {

double sq_dist(const FeatureMatrix& x, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.cols; ++k) {
    const double d = x(i, k) - x(j, k);
    s += d * d;
  }
  return s;
}

double dot_rows(const FeatureMatrix& x, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.cols; ++k) s += x(i, k) * x(j, k);
  return s;
}

// H K H, computed as K - row means - column means + grand mean.
Matrix centered(const Matrix& k) {
  const std::size_t n = k.rows;
  std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      row_mean[i] += k(i, j);
      col_mean[j] += k(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    grand += row_mean[i];
    row_mean[i] /= static_cast<double>(n);
    col_mean[i] /= static_cast<double>(n);
  }
  grand /= static_cast<double>(n * n);
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) c(i, j) = k(i, j) - row_mean[i] - col_mean[j] + grand;
  }
  return c;
}

// tr(A B) for centered symmetric A, B equals the elementwise inner product.
double hsic_centered(const Matrix& kc, const Matrix& lc) {
  const std::size_t n = kc.rows;
  double s = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) s += kc.values[i] * lc.values[i];
  const double d = static_cast<double>(n - 1);
  return s / (d * d);
}

void check_square(const Matrix& k, const char* op) {
  if (k.rows != k.cols) throw ShapeError(std::string(op) + ": Gram matrix must be square");
  if (k.rows < 2) throw ValueError(std::string(op) + ": needs n >= 2");
}

}  // namespace

double median_heuristic_bandwidth(const FeatureMatrix& x) {
  std::vector<double> d;
  d.reserve(x.rows * (x.rows - 1) / 2);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = i + 1; j < x.rows; ++j) {
      const double v = std::sqrt(sq_dist(x, i, j));
      if (v > 0.0) d.push_back(v);
    }
  }
  if (d.empty()) throw ValueError("rbf bandwidth undefined: all rows are identical");
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

Matrix gram(const FeatureMatrix& x, const Kernel& kernel) {
  if (x.rows < 2) throw ValueError("gram: needs n >= 2");
  const std::size_t n = x.rows;
  Matrix k(n, n);
  switch (kernel.kind) {
    case Kernel::Kind::kLinear:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) k(i, j) = k(j, i) = dot_rows(x, i, j);
      }
      break;
    case Kernel::Kind::kPolynomial:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
          k(i, j) = k(j, i) = std::pow(dot_rows(x, i, j) + kernel.coef0, kernel.degree);
        }
      }
      break;
    case Kernel::Kind::kRbf: {
      const double sigma = median_heuristic_bandwidth(x);
      const double inv = 1.0 / (2.0 * sigma * sigma);
      for (std::size_t i = 0; i < n; ++i) {
        k(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) k(i, j) = k(j, i) = std::exp(-sq_dist(x, i, j) * inv);
      }
      break;
    }
  }
  return k;
}

double hsic(const Matrix& k, const Matrix& l) {
  check_square(k, "hsic");
  check_square(l, "hsic");
  if (k.rows != l.rows) throw ShapeError("hsic: Gram matrices differ in size");
  // tr(K H L H) = <H K H, L>; only one side needs centering.
  const Matrix kc = centered(k);
  const std::size_t n = k.rows;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) s += kc(i, j) * l(j, i);
  }
  const double d = static_cast<double>(n - 1);
  return s / (d * d);
}

namespace {

double cka_from_centered(const Matrix& kc, const Matrix& lc) {
  const double kk = hsic_centered(kc, kc);
  const double ll = hsic_centered(lc, lc);
  if (!(kk > 0.0) || !(ll > 0.0)) throw ValueError("cka: zero self-HSIC (constant features)");
  return hsic_centered(kc, lc) / std::sqrt(kk * ll);
}

}  // namespace

double cka(const FeatureMatrix& x, const FeatureMatrix& y, const Kernel& kernel) {
  if (x.rows != y.rows) throw ShapeError("cka: row counts differ");
  return cka_from_centered(centered(gram(x, kernel)), centered(gram(y, kernel)));
}

CkaMatrix similarity_matrix(const FeatureStack& features, const Kernel& kernel, std::size_t max_rows,
                            std::uint64_t seed) {
  if (features.size() < 2) throw ValueError("similarity_matrix: needs at least two blocks");
  const std::size_t l = features.size();
  std::vector<FeatureMatrix> mats;
  mats.reserve(l);
  for (const auto& f : features) mats.push_back(feature_matrix(f));
  const std::size_t n = mats[0].rows;
  for (const auto& m : mats) {
    if (m.rows != n) throw ShapeError("similarity_matrix: blocks differ in row count");
  }

  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (max_rows >= 2 && n > max_rows) {
    Rng rng(seed, /*stream=*/0xc4a);
    for (std::size_t i = 0; i < max_rows; ++i) std::swap(rows[i], rows[i + rng.below(n - i)]);
    rows.resize(max_rows);
    std::sort(rows.begin(), rows.end());
  }

  std::vector<Matrix> grams;
  grams.reserve(l);
  for (const auto& m : mats) {
    FeatureMatrix sub(rows.size(), m.cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(m.values.begin() + static_cast<std::ptrdiff_t>(rows[r] * m.cols), m.cols,
                  sub.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
    }
    grams.push_back(centered(gram(sub, kernel)));
  }

  CkaMatrix out;
  out.size = l;
  out.values.assign(l * l, 0.0);
  out.kernel = kernel;
  out.batch = features[0].dim(0);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = i; j < l; ++j) {
      const double v = cka_from_centered(grams[i], grams[j]);
      out.values[i * l + j] = out.values[j * l + i] = v;
    }
  }
  return out;
}

double diversity_summary(const CkaMatrix& m) {
  if (m.size < 2) throw ValueError("diversity_summary: needs L >= 2");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < m.size; ++i) {
    for (std::size_t j = i + 1; j < m.size; ++j) {
      s += m(i, j);
      ++count;
    }
  }
  return s / static_cast<double>(count);
}

std::string cka_csv(const CkaMatrix& m) {
  std::ostringstream os;
  for (std::size_t j = 0; j < m.size; ++j) os << ",b" << j;
  os << '\n';
  char buf[64];
  for (std::size_t i = 0; i < m.size; ++i) {
    os << 'b' << i;
    for (std::size_t j = 0; j < m.size; ++j) {
      std::snprintf(buf, sizeof(buf), "%.10g", m(i, j));
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

void write_cka_csv(const std::string& path, const CkaMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << cka_csv(m);
}

void write_feature_dump(const std::string& path, const FeatureStack& features, std::size_t step, double t) {
  Container c;
  char name[32];
  for (std::size_t l = 0; l < features.size(); ++l) {
    std::snprintf(name, sizeof(name), "block_%02zu", l);
    c.add(name, features[l].detach());
  }
  c.meta["step"] = step;
  c.meta["t"] = t;
  write_container(path, c);
}

FeatureStack read_feature_dump(const std::string& path, std::size_t* step, double* t) {
  const Container c = read_container(path);
  FeatureStack out;
  char name[32];
  for (std::size_t l = 0;; ++l) {
    std::snprintf(name, sizeof(name), "block_%02zu", l);
    if (!c.contains(name)) break;
    out.push_back(c.get(name));
  }
  if (out.empty()) throw MalformedError("feature dump holds no block_XX tensors");
  try {
    if (step) *step = c.meta.at("step").get<std::size_t>();
    if (t) *t = c.meta.at("t").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedError(std::string("feature dump manifest: ") + e.what());
  }
  return out;
}

}  // namespace ddit
