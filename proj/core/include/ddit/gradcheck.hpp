// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of reverse-mode gradients for every
// training-loss component on a tiny model.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ddit/config.hpp"

namespace ddit {

struct GradcheckOptions {
  std::size_t draws = 5;
  double h = 1e-5;
  double tolerance = 1e-5;
  // Coordinates probed per parameter tensor per draw (all when the tensor is
  // smaller).
  std::size_t coords_per_tensor = 4;
  // Relative error is |a - n| / max(|a|, |n|, floor): gradients smaller than
  // the floor are compared absolutely, below the finite-difference noise.
  double floor = 1e-4;
  std::uint64_t seed = 0;
  // Negative control: perturbs the analytic gradient so the check must fail.
  bool corrupt_gradient = false;
};

struct ComponentReport {
  std::string name;  // flow_matching, orth, mi, disp, alignment, total
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<ComponentReport> components;
  bool passed() const;
  std::string to_string() const;
};

// Largest model the checker accepts.
inline constexpr std::size_t kGradcheckMaxBlocks = 4;
inline constexpr std::size_t kGradcheckMaxHidden = 16;

// L=4, D=16, 4 tokens (4x4 single-channel images, patch 2), batch 2.
RunConfig tiny_gradcheck_config();

/// Throws ConfigError when the model exceeds the tiny-size limits. Diversity
/// and alignment terms are checked regardless of the train switches.
GradcheckReport run_gradcheck(const RunConfig& cfg, const GradcheckOptions& opts = {});

}  // namespace ddit
