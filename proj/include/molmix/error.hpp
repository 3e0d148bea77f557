// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace molmix {

// Coarse error categories; the CLI maps them onto exit codes.
enum class ErrorCategory {
  kConfig,
  kData,
  kNumeric,
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string &what)
      : std::runtime_error(what), category_(category) { }

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string &what)
      : Error(ErrorCategory::kConfig, what) { }
};

class DataError : public Error {
 public:
  explicit DataError(const std::string &what)
      : Error(ErrorCategory::kData, what) { }
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string &what)
      : Error(ErrorCategory::kNumeric, what) { }
};

// Shape or index contract violated by a caller.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string &what)
      : Error(ErrorCategory::kInternal, what) { }
};

}  // namespace molmix
