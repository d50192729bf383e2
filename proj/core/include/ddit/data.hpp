// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ddit/config.hpp"
#include "ddit/rng.hpp"
#include "ddit/tensor.hpp"

namespace ddit {

struct Batch {
  // points: [n, 2]; grid: [n, C, H, W]
  Tensor x;
  std::vector<std::size_t> y;
};

std::size_t num_classes(const DatasetSpec& spec);

// Centres of the 8-Gaussian mixture: radius 2, angle 2*pi*c/8.
std::vector<std::array<double, 2>> gaussian8_centers(double radius = 2.0);

// Pixel-space (row, col) centre of the blob for class c on the 3x3 lattice.
std::array<double, 2> grid_anchor(std::size_t cls, std::size_t image_size);

/// Draws n labelled examples. All randomness comes from `rng`.
Batch sample_batch(const DatasetSpec& spec, std::size_t n, Rng& rng);

// Dataset dumps: container tensors "x" and "y" (labels stored as doubles).
void save_dataset(const std::string& path, const Batch& batch);
Batch load_dataset(const std::string& path);

}  // namespace ddit
