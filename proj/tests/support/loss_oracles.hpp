// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Loop-based reimplementations of the diversity terms, written against raw
// arrays so they share no code with the tensor engine.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace ddit::testing {

// One block's features as plain values, indexed [n][t][d].
struct RawBlock {
  std::size_t n = 0, t = 0, d = 0;
  std::vector<double> v;
  double at(std::size_t i, std::size_t j, std::size_t k) const { return v[(i * t + j) * d + k]; }
};

inline std::vector<std::size_t> distinct_blocks(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::size_t> b;
  for (auto [i, j] : pairs) {
    b.push_back(i);
    b.push_back(j);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

// Mean over pairs and all (n, t) of the cosine between matched tokens.
inline double oracle_mi(const std::vector<RawBlock>& f, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                        double eps = 1e-8) {
  double total = 0.0;
  for (auto [a, b] : pairs) {
    const RawBlock& x = f[a];
    const RawBlock& y = f[b];
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < x.n; ++i) {
      for (std::size_t j = 0; j < x.t; ++j) {
        double dot = 0.0, nx = 0.0, ny = 0.0;
        for (std::size_t k = 0; k < x.d; ++k) {
          dot += x.at(i, j, k) * y.at(i, j, k);
          nx += x.at(i, j, k) * x.at(i, j, k);
          ny += y.at(i, j, k) * y.at(i, j, k);
        }
        pair_sum += dot / (std::max(std::sqrt(nx), eps) * std::max(std::sqrt(ny), eps));
      }
    }
    total += pair_sum / static_cast<double>(x.n * x.t);
  }
  return total / static_cast<double>(pairs.size());
}

// Per block: normalise each dimension across the N*T samples, take its signed
// mean; average those vectors over the distinct blocks; scale by the largest
// magnitude; return minus the population variance.
inline double oracle_disp(const std::vector<RawBlock>& f,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double eps = 1e-8) {
  const auto blocks = distinct_blocks(pairs);
  const std::size_t d = f[blocks[0]].d;
  std::vector<double> a(d, 0.0);
  for (std::size_t b : blocks) {
    const RawBlock& x = f[b];
    const std::size_t samples = x.n * x.t;
    for (std::size_t k = 0; k < d; ++k) {
      double sq = 0.0;
      for (std::size_t s = 0; s < samples; ++s) sq += x.v[s * d + k] * x.v[s * d + k];
      const double norm = std::max(std::sqrt(sq), eps);
      double m = 0.0;
      for (std::size_t s = 0; s < samples; ++s) m += x.v[s * d + k] / norm;
      a[k] += m / static_cast<double>(samples);
    }
  }
  double max_abs = 0.0;
  for (double& v : a) {
    v /= static_cast<double>(blocks.size());
    max_abs = std::max(max_abs, std::abs(v));
  }
  double mean = 0.0;
  for (double& v : a) {
    v /= max_abs + eps;
    mean += v;
  }
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : a) var += (v - mean) * (v - mean);
  return -var / static_cast<double>(d);
}

// Mean over pairs of the cosine between block means.
inline double oracle_orth(const std::vector<RawBlock>& f,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double eps = 1e-8) {
  const auto mean_of = [](const RawBlock& x) {
    std::vector<double> m(x.d, 0.0);
    for (std::size_t s = 0; s < x.n * x.t; ++s) {
      for (std::size_t k = 0; k < x.d; ++k) m[k] += x.v[s * x.d + k];
    }
    for (double& v : m) v /= static_cast<double>(x.n * x.t);
    return m;
  };
  double total = 0.0;
  for (auto [a, b] : pairs) {
    const auto ma = mean_of(f[a]), mb = mean_of(f[b]);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < ma.size(); ++k) {
      dot += ma[k] * mb[k];
      na += ma[k] * ma[k];
      nb += mb[k] * mb[k];
    }
    total += dot / (std::max(std::sqrt(na), eps) * std::max(std::sqrt(nb), eps));
  }
  return total / static_cast<double>(pairs.size());
}

}  // namespace ddit::testing
