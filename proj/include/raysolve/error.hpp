#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace raysolve {

enum class ErrorCode {
  InvalidMedium,
  WrongMediumKind,
  TruncationTooLarge,
  SingularPoint,
  InvalidResolution,
  DimensionMismatch,
  OrderOutOfRange,
  CapTooSmall,
  ZeroScatteringWithSource,
  NoConvergence,
  NormNotContractive,
  TooLarge,
  SingularMatrix,
  CacheMismatch,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMedium: return "InvalidMedium";
    case ErrorCode::WrongMediumKind: return "WrongMediumKind";
    case ErrorCode::TruncationTooLarge: return "TruncationTooLarge";
    case ErrorCode::SingularPoint: return "SingularPoint";
    case ErrorCode::InvalidResolution: return "InvalidResolution";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::OrderOutOfRange: return "OrderOutOfRange";
    case ErrorCode::CapTooSmall: return "CapTooSmall";
    case ErrorCode::ZeroScatteringWithSource: return "ZeroScatteringWithSource";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NormNotContractive: return "NormNotContractive";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace raysolve
