#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tnshield {

enum class ErrorCode {
  ShapeMismatch,
  InvalidSplit,
  InvalidPermutation,
  InvalidArgument,
  ConvergenceFailure,
  InsufficientRank,
  NonPositiveValue,
  InvalidSelector,
  ZeroNormInput,
  InvalidKernel,
  CorruptFile,
  UnsupportedVersion,
  DecodeError,
  IoError,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::InvalidPermutation: return "InvalidPermutation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::InsufficientRank: return "InsufficientRank";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::InvalidSelector: return "InvalidSelector";
    case ErrorCode::ZeroNormInput: return "ZeroNormInput";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code.
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

}  // namespace tnshield
