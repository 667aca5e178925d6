#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gprice {

enum class ErrorKind {
  NonPositivePrice,
  BadCategory,
  DimensionMismatch,
  BadFraction,
  EmptyInput,
  BadRatios,
  DegenerateInput,
  BadConfig,
  BadDims,
  StaleCache,
  ShapeMismatch,
  EmptyBatch,
  BadSchedule,
  EmptyData,
  NonFiniteLoss,
  IoError,
  BadMagic,
  VersionMismatch,
  ChecksumMismatch,
  DegenerateTruth,
  ParseError,
  BindFailure,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonPositivePrice: return "NonPositivePrice";
    case ErrorKind::BadCategory: return "BadCategory";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BadFraction: return "BadFraction";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::BadRatios: return "BadRatios";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::BadDims: return "BadDims";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::BadSchedule: return "BadSchedule";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::DegenerateTruth: return "DegenerateTruth";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying its kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace gprice
