#pragma once

#include <stdexcept>
#include <string>

namespace aslam {

enum class ErrorCode {
  kInvalidInput,
  kOutOfDomain,
  kEmptyWindow,
  kMissingLandmark,
  kDuplicateLandmark,
  kSingularInnovation,
  kDegenerateGeometry,
  kReductionInapplicable,
  kDimensionMismatch,
  kSchema,
  kIo,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception type thrown by every library operation. The code lets callers
/// branch on the failure class without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kOutOfDomain: return "out of domain";
    case ErrorCode::kEmptyWindow: return "empty window";
    case ErrorCode::kMissingLandmark: return "missing landmark";
    case ErrorCode::kDuplicateLandmark: return "duplicate landmark";
    case ErrorCode::kSingularInnovation: return "singular innovation";
    case ErrorCode::kDegenerateGeometry: return "degenerate geometry";
    case ErrorCode::kReductionInapplicable: return "reduction inapplicable";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace aslam
