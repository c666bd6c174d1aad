#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace soilpq {

enum class ErrorCode {
  SchemaError,
  AllRowsRemoved,
  ZeroVariance,
  NonPositive,
  DimensionMismatch,
  InvalidParams,
  TooFewPoints,
  NonFinite,
  IndivisibleDims,
  CodeOutOfRange,
  Overflow,
  EmptyGrid,
  IoError,
  FormatVersionMismatch,
  CorruptFile,
  MissingCoords,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::AllRowsRemoved: return "AllRowsRemoved";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::NonPositive: return "NonPositive";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::IndivisibleDims: return "IndivisibleDims";
    case ErrorCode::CodeOutOfRange: return "CodeOutOfRange";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::MissingCoords: return "MissingCoords";
  }
  return "Unknown";
}

/// Every failure raised by the library. The code lets callers branch on the
/// failure kind; what() carries the human-readable context (file, column,
/// row) when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace soilpq
