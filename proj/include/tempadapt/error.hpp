// Copyright 2026 The tempadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tempadapt {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
  kConfig,     // invalid configuration or arguments (exit 1)
  kData,       // bad or insufficient data (exit 2)
  kIo,         // unreadable / unwritable files (exit 2)
  kIntegrity,  // cache or checkpoint inconsistency (exit 3)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& what) : Error(ErrorKind::kIntegrity, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return 1;
    case ErrorKind::kData:
    case ErrorKind::kIo:
      return 2;
    case ErrorKind::kIntegrity:
      return 3;
  }
  return 2;
}

}  // namespace tempadapt
