// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace ddit {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or extents that do not satisfy an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation, or a non-finite loss/gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid argument value (out-of-range t, bad class id, unknown kind, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File-system failures (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

// Container / file format failures. Each failure class has its own type.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  BadMagicError() : FormatError("bad magic") {}
};

class VersionMismatchError : public FormatError {
 public:
  explicit VersionMismatchError(int found)
      : FormatError("version mismatch: found " + std::to_string(found)) {}
};

class TruncatedError : public FormatError {
 public:
  explicit TruncatedError(const std::string& what)
      : FormatError("truncated payload: " + what) {}
};

class MalformedError : public FormatError {
 public:
  explicit MalformedError(const std::string& what)
      : FormatError("malformed container: " + what) {}
};

}  // namespace ddit
