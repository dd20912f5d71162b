#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hydra2 {

enum class ErrorCode {
  // input / contract violations
  EmptyRow,
  EmptyColumn,
  IndexOutOfBounds,
  DuplicateEntry,
  NotDivisible,
  TauOutOfRange,
  TauTooSmall,
  NonpositiveBeta,
  ThetaOutOfRange,
  InvalidRange,
  InfeasibleDualPoint,
  TooLargeToEnumerate,
  ShardMismatch,
  InvalidShape,
  ParseError,
  FormatError,
  // numeric failures
  NonFiniteIterate,
  // distributed runtime
  TransportFailure,
  DesyncDetected,
};

enum class ErrorCategory { Validation, Numeric, Runtime };

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyRow: return "EmptyRow";
    case ErrorCode::EmptyColumn: return "EmptyColumn";
    case ErrorCode::IndexOutOfBounds: return "IndexOutOfBounds";
    case ErrorCode::DuplicateEntry: return "DuplicateEntry";
    case ErrorCode::NotDivisible: return "NotDivisible";
    case ErrorCode::TauOutOfRange: return "TauOutOfRange";
    case ErrorCode::TauTooSmall: return "TauTooSmall";
    case ErrorCode::NonpositiveBeta: return "NonpositiveBeta";
    case ErrorCode::ThetaOutOfRange: return "ThetaOutOfRange";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::InfeasibleDualPoint: return "InfeasibleDualPoint";
    case ErrorCode::TooLargeToEnumerate: return "TooLargeToEnumerate";
    case ErrorCode::ShardMismatch: return "ShardMismatch";
    case ErrorCode::InvalidShape: return "InvalidShape";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::DesyncDetected: return "DesyncDetected";
  }
  return "Unknown";
}

inline ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteIterate: return ErrorCategory::Numeric;
    case ErrorCode::TransportFailure:
    case ErrorCode::DesyncDetected: return ErrorCategory::Runtime;
    default: return ErrorCategory::Validation;
  }
}

/// Exception carrying a machine-readable code and, where meaningful, the
/// offending index (row, column, line number, node id).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace hydra2
