// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddit/container.hpp"
#include "ddit/errors.hpp"

namespace ddit {

namespace {
constexpr double kPixelNoise = 0.05;
}

std::size_t num_classes(const DatasetSpec& spec) {
  if (spec.mode == DataMode::kGrid) return spec.num_classes;
  return spec.kind == PointKind::kGaussian8 ? 8 : 1;
}

std::vector<std::array<double, 2>> gaussian8_centers(double radius) {
  std::vector<std::array<double, 2>> c(8);
  for (std::size_t k = 0; k < 8; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / 8.0;
    c[k] = {radius * std::cos(a), radius * std::sin(a)};
  }
  return c;
}

std::array<double, 2> grid_anchor(std::size_t cls, std::size_t image_size) {
  const std::size_t cell = cls % 9;
  const double step = static_cast<double>(image_size) / 4.0;
  return {step * static_cast<double>(cell / 3 + 1) - 0.5, step * static_cast<double>(cell % 3 + 1) - 0.5};
}

Batch sample_batch(const DatasetSpec& spec, std::size_t n, Rng& rng) {
  if (n < 1) throw ValueError("sample_batch: n must be >= 1");
  spec.validate();
  Batch b;
  b.y.resize(n);
  if (spec.mode == DataMode::kPoints) {
    std::vector<double> x(n * 2);
    if (spec.kind == PointKind::kGaussian8) {
      const auto centers = gaussian8_centers();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng.below(8);
        b.y[i] = c;
        x[2 * i] = centers[c][0] + spec.mode_std * rng.normal();
        x[2 * i + 1] = centers[c][1] + spec.mode_std * rng.normal();
      }
    } else {
      // Cells (i, j) of the 4x4 board over [-2, 2]^2 with (i + j) even.
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cell = rng.below(8);
        const std::size_t row = cell / 2;
        const std::size_t col = 2 * (cell % 2) + (row % 2);
        b.y[i] = 0;
        x[2 * i] = -2.0 + static_cast<double>(col) + rng.uniform();
        x[2 * i + 1] = -2.0 + static_cast<double>(row) + rng.uniform();
      }
    }
    b.x = Tensor::from({n, 2}, std::move(x));
    return b;
  }

  const std::size_t s = spec.image_size, ch = spec.channels;
  std::vector<double> x(n * ch * s * s);
  const double inv2var = 1.0 / (2.0 * spec.blob_std * spec.blob_std);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.below(spec.num_classes);
    b.y[i] = c;
    const auto anchor = grid_anchor(c, s);
    for (std::size_t k = 0; k < ch; ++k) {
      for (std::size_t r = 0; r < s; ++r) {
        for (std::size_t q = 0; q < s; ++q) {
          const double dr = static_cast<double>(r) - anchor[0];
          const double dq = static_cast<double>(q) - anchor[1];
          const double v = std::exp(-(dr * dr + dq * dq) * inv2var) + kPixelNoise * rng.normal();
          x[((i * ch + k) * s + r) * s + q] = std::clamp(v, -1.0, 1.0);
        }
      }
    }
  }
  b.x = Tensor::from({n, ch, s, s}, std::move(x));
  return b;
}

void save_dataset(const std::string& path, const Batch& batch) {
  if (batch.x.dim(0) != batch.y.size()) throw ShapeError("save_dataset: label count differs from batch size");
  Container c;
  c.add("x", batch.x.detach());
  c.add("y", Tensor::from({batch.y.size()}, std::vector<double>(batch.y.begin(), batch.y.end())));
  write_container(path, c);
}

Batch load_dataset(const std::string& path) {
  const Container c = read_container(path);
  if (!c.contains("x") || !c.contains("y")) throw MalformedError("dataset dump needs tensors \"x\" and \"y\"");
  Batch b;
  b.x = c.get("x");
  const Tensor& y = c.get("y");
  if (y.rank() != 1 || y.dim(0) != b.x.dim(0)) throw MalformedError("dataset dump: y must be [n]");
  for (double v : y.data()) {
    if (v < 0.0 || v != std::floor(v)) throw MalformedError("dataset dump: labels must be non-negative integers");
    b.y.push_back(static_cast<std::size_t>(v));
  }
  return b;
}

}  // namespace ddit
