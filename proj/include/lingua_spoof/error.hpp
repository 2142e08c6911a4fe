#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lingua_spoof {

enum class ErrorCode {
  EmptyTranscript,
  IndexOutOfRange,
  MultiwordCandidate,
  ParseError,
  OracleUnavailable,
  MalformedResponse,
  PartialAnnotation,
  BudgetExhausted,
  UnsupportedFormat,
  CorruptHeader,
  ClipTooShort,
  DimensionMismatch,
  ZeroVector,
  LengthMismatch,
  EmptyText,
  NonFinite,
  ZeroCentroid,
  ConstantColumn,
  SingularDesign,
  DegenerateSample,
  EmptyRun,
  InvalidArgument,
  ManifestError,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyTranscript: return "EmptyTranscript";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::MultiwordCandidate: return "MultiwordCandidate";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::OracleUnavailable: return "OracleUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::PartialAnnotation: return "PartialAnnotation";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::ClipTooShort: return "ClipTooShort";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ZeroCentroid: return "ZeroCentroid";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::EmptyRun: return "EmptyRun";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure in the library surfaces as this one exception type; callers
// branch on code() rather than on a class hierarchy.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace lingua_spoof
