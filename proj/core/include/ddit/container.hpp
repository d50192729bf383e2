// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0
//
// "DDIT1" tensor container shared by checkpoints, feature dumps, datasets and
// sample files:
//
//   bytes 0..4   ASCII "DDIT1"
//   byte  5      format version (0x01)
//   bytes 6..9   little-endian u32 manifest length M
//   M bytes      UTF-8 JSON manifest
//   payload      raw little-endian IEEE-754 float64 data
//
// The manifest holds {"tensors": [{"name", "shape", "dtype": "f64",
// "offset", "len"}], ...} where offset and len are byte counts relative to
// the start of the payload. Every other top-level manifest field is carried
// through as metadata.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddit/tensor.hpp"

namespace ddit {

inline constexpr char kContainerMagic[5] = {'D', 'D', 'I', 'T', '1'};
inline constexpr std::uint8_t kContainerVersion = 1;

struct Container {
  // Top-level manifest fields other than "tensors".
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  void add(std::string name, const Tensor& t) { tensors.emplace_back(std::move(name), t); }
};

std::vector<std::uint8_t> encode_container(const Container& c);
// Raises BadMagicError, VersionMismatchError, TruncatedError or MalformedError.
Container decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

}  // namespace ddit
