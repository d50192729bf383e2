// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/rng.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "ddit/errors.hpp"

namespace ddit {

namespace {
constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed) {
  // Standard pcg32_srandom_r seeding.
  state_ = 0;
  inc_ = (splitmix64(stream) << 1u) | 1u;
  next_u32();
  state_ += seed;
  next_u32();
}

std::uint32_t Rng::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * kMultiplier + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
  const auto rot = static_cast<std::uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t hi = next_u32();
  return (hi << 32) | next_u32();
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ValueError("Rng::below: bound must be positive");
  // Lemire-style rejection to remove modulo bias.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

std::vector<double> Rng::normals(std::size_t n) {
  std::vector<double> out(n);
  for (auto& v : out) v = normal();
  return out;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(state_)), stream + 1);
}

std::string Rng::to_hex() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx",
                static_cast<unsigned long long>(state_),
                static_cast<unsigned long long>(inc_),
                static_cast<unsigned long long>(seed_));
  return buf;
}

Rng Rng::from_hex(const std::string& hex) {
  if (hex.size() != 48) throw MalformedError("rng state must be 48 hex digits");
  auto parse = [&](std::size_t off) {
    std::uint64_t v = 0;
    for (std::size_t i = off; i < off + 16; ++i) {
      const char c = hex[i];
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
      else throw MalformedError("rng state has a non-hex digit");
      v = (v << 4) | static_cast<std::uint64_t>(d);
    }
    return v;
  };
  Rng r;
  r.state_ = parse(0);
  r.inc_ = parse(16);
  r.seed_ = parse(32);
  if ((r.inc_ & 1u) == 0) throw MalformedError("rng increment must be odd");
  return r;
}

}  // namespace ddit
