#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hubnorm {

enum class ErrorCode {
  ZeroNormRow,
  DimMismatch,
  ShapeMismatch,
  NonFinite,
  NotNormalized,
  EmptyBank,
  InvalidK,
  KTooLarge,
  IndexOutOfRange,
  DegenerateDistribution,
  InvalidParams,
  BadMagic,
  BadHeader,
  TruncatedFile,
  SizeMismatch,
  RaggedRows,
  ParseError,
  IoError,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library. `code()` identifies the class of
/// failure; `what()` carries the human-readable context (row, path, line).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hubnorm
