// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Kernel CKA between the outputs of different blocks.
//
//   HSIC(K, L) = tr(K H L H) / (n - 1)^2,   H = I - 11^T / n
//   CKA(X, Y)  = HSIC(K_X, K_Y) / sqrt(HSIC(K_X, K_X) HSIC(K_Y, K_Y))

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ddit/model.hpp"
#include "ddit/tensor.hpp"

namespace ddit {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

// One row per token instance: a [N, T, D] block becomes [(N T), D].
using FeatureMatrix = Matrix;
FeatureMatrix feature_matrix(const Tensor& block);

struct Kernel {
  enum class Kind { kLinear, kRbf, kPolynomial };
  Kind kind = Kind::kRbf;
  int degree = 2;      // polynomial: (x.y + coef0)^degree
  double coef0 = 1.0;

  static Kernel linear() { return {Kind::kLinear}; }
  // Bandwidth from the median of the nonzero pairwise distances.
  static Kernel rbf() { return {Kind::kRbf}; }
  static Kernel polynomial(int degree, double coef0 = 1.0) { return {Kind::kPolynomial, degree, coef0}; }
  std::string name() const;
};

Kernel parse_kernel(const std::string& name);

// Throws ValueError for n < 2, and for RBF when every row is identical.
Matrix gram(const FeatureMatrix& x, const Kernel& kernel);
double median_heuristic_bandwidth(const FeatureMatrix& x);
double hsic(const Matrix& k, const Matrix& l);
// Throws ValueError when a self-HSIC is zero (constant features).
double cka(const FeatureMatrix& x, const FeatureMatrix& y, const Kernel& kernel);

struct CkaMatrix {
  std::size_t size = 0;
  std::vector<double> values;  // size x size, row-major
  Kernel kernel;
  std::size_t step = 0;
  double t = 0.0;
  std::size_t batch = 0;

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
};

/// Pairwise CKA over all blocks. Rows are subsampled (same rows for every
/// block, chosen with `seed`) to at most `max_rows` before building Grams.
CkaMatrix similarity_matrix(const FeatureStack& features, const Kernel& kernel,
                            std::size_t max_rows = 512, std::uint64_t seed = 0);

// Mean of the strict upper triangle.
double diversity_summary(const CkaMatrix& m);

// ",b0,b1,..." header then "bi,v,v,..." rows, values at 10 significant digits.
std::string cka_csv(const CkaMatrix& m);
void write_cka_csv(const std::string& path, const CkaMatrix& m);

// Feature dumps: tensors "block_00".."block_{L-1}" plus manifest step and t.
void write_feature_dump(const std::string& path, const FeatureStack& features, std::size_t step, double t);
FeatureStack read_feature_dump(const std::string& path, std::size_t* step = nullptr, double* t = nullptr);

}  // namespace ddit
