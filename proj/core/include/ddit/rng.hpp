// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddit {

/// PCG32 (XSH-RR output, 64-bit LCG state) with a selectable stream.
///
/// Normals come from the Box-Muller transform; each call consumes exactly
/// two uniforms and nothing is cached, so the full generator state is the
/// (state, increment) pair and round-trips through `to_hex`/`from_hex`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  std::vector<double> normals(std::size_t n);

  // Independent generator for a sub-stream (e.g. one sampling chain).
  Rng split(std::uint64_t stream) const;

  std::uint64_t state() const { return state_; }
  std::uint64_t increment() const { return inc_; }

  std::string to_hex() const;
  static Rng from_hex(const std::string& hex);

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
  std::uint64_t seed_ = 0;
};

}  // namespace ddit
