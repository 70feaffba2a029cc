#pragma once

#include <stdexcept>
#include <string>

namespace episodica {

// Broad failure classes; the CLI maps each to an exit code.
enum class ErrorCategory { kConfig, kData, kNumeric, kContract };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Invalid configuration value, architecture or hyperparameter.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

/// Malformed or inconsistent input data (files, manifests, pools).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::kData, what) {}
};

/// Byte-level format problem; carries the offset where decoding stopped.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

/// Episode sampling impossible with the given pool.
class SamplingError : public DataError {
 public:
  explicit SamplingError(const std::string& what) : DataError(what) {}
};

/// Value outside an operation's mathematical domain (log of 0, zero-norm row...).
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::kNumeric, what) {}
};

/// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::kContract, what) {}
};

/// Violated precondition of an API call (mismatched keys, bad index, wrong state).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::kContract, what) {}
};

}  // namespace episodica
