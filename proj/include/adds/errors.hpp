// Copyright (c) 2026 the adds authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace adds {

/// Base class for all library errors. `code()` returns a stable,
/// machine-parsable identifier (also used as the CLI exit prefix).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// A value or shape violated an operation precondition.
class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what) : Error("E_INVALID_INPUT", what) {}
};

/// An unknown identifier, inconsistent option set, or bad config document.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("E_CONFIG", what) {}
};

/// Filesystem failure; the message names the offending path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("E_IO", what) {}
};

/// A file exists but is not in the expected format (bit depth, channels, magic).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("E_FORMAT", what) {}
};

/// Frame indices of a sequence are not consecutive where they must be.
class SequenceError : public Error {
 public:
  explicit SequenceError(const std::string& what) : Error("E_SEQUENCE", what) {}
};

/// An input is structurally valid but carries no usable content
/// (empty validity mask, empty split, ...).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error("E_DEGENERATE", what) {}
};

/// A loss term became non-finite during optimization; the message names the term.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("E_DIVERGENCE", what) {}
};

/// Checkpoint does not match the current model/config schema.
class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error("E_VERSION", what) {}
};

}  // namespace adds
