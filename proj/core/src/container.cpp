// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "ddit/errors.hpp"

namespace ddit {

using nlohmann::json;

namespace {

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

const Tensor& Container::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw MalformedError("missing tensor '" + name + "'");
}

bool Container::contains(const std::string& name) const {
  for (const auto& [n, _] : tensors) {
    if (n == name) return true;
  }
  return false;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  json manifest = c.meta.is_object() ? c.meta : json::object();
  json entries = json::array();
  std::uint64_t offset = 0;
  std::set<std::string> seen;
  for (const auto& [name, t] : c.tensors) {
    if (!seen.insert(name).second) throw ValueError("duplicate tensor name '" + name + "'");
    const std::uint64_t len = t.numel() * sizeof(double);
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f64"}, {"offset", offset}, {"len", len}});
    offset += len;
  }
  manifest["tensors"] = std::move(entries);
  const std::string text = manifest.dump();
  if (text.size() > 0xffffffffULL) throw ValueError("manifest too large");

  std::vector<std::uint8_t> out;
  out.reserve(10 + text.size() + offset);
  out.insert(out.end(), std::begin(kContainerMagic), std::end(kContainerMagic));
  out.push_back(kContainerVersion);
  const auto m = static_cast<std::uint32_t>(text.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(m >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [_, t] : c.tensors) {
    for (double v : t.data()) put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Container decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kContainerMagic, 5) != 0) throw BadMagicError();
  if (bytes.size() < 6) throw TruncatedError("missing version byte");
  if (bytes[5] != kContainerVersion) throw VersionMismatchError(bytes[5]);
  if (bytes.size() < 10) throw TruncatedError("missing manifest length");
  std::uint32_t m = 0;
  for (int i = 3; i >= 0; --i) m = (m << 8) | bytes[6 + i];
  if (bytes.size() < 10ULL + m) throw TruncatedError("manifest shorter than declared");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 10, bytes.begin() + 10 + m);
  } catch (const json::parse_error& e) {
    throw MalformedError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw MalformedError("manifest lacks a \"tensors\" array");
  }

  const std::size_t payload_start = 10 + m;
  const std::size_t payload_size = bytes.size() - payload_start;
  Container c;
  try {
    for (const auto& e : manifest["tensors"]) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      if (e.at("dtype").get<std::string>() != "f64") throw MalformedError("unsupported dtype for '" + name + "'");
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto len = e.at("len").get<std::uint64_t>();
      if (len != numel(shape) * sizeof(double)) throw MalformedError("length/shape disagree for '" + name + "'");
      if (offset > payload_size || len > payload_size - offset) throw TruncatedError("tensor '" + name + "'");
      std::vector<double> data(numel(shape));
      const std::uint8_t* p = bytes.data() + payload_start + offset;
      for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(get_u64_le(p + 8 * i));
      c.tensors.emplace_back(name, Tensor::from(shape, std::move(data)));
    }
  } catch (const json::exception& e) {
    throw MalformedError(std::string("bad tensor entry: ") + e.what());
  } catch (const NumericError&) {
    throw MalformedError("payload holds non-finite values");
  }
  manifest.erase("tensors");
  c.meta = std::move(manifest);
  return c;
}

void write_container(const std::string& path, const Container& c) {
  const auto bytes = encode_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

}  // namespace ddit
