// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfrl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or precondition violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model or run configuration, detected at build/parse time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared. `where` names the layer, block or batch row.
class NumericError : public Error {
 public:
  NumericError(const std::string& where, const std::string& what)
      : Error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Linear flow with a (near-)zero pivot on the diagonal of U.
class SingularityError : public Error {
 public:
  explicit SingularityError(std::size_t index)
      : Error("linear flow singular: |diag(U)[" + std::to_string(index) + "]| < 1e-12"),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Malformed file (bad magic, truncated payload, missing header key).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset generation produced unusable data (e.g. the scripted expert failed).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file or directory could not be created or opened.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nfrl
