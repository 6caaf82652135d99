#pragma once

#include <stdexcept>
#include <string>

namespace convstruct {

enum class ErrorKind {
  kNotFound,
  kEmptyCorpus,
  kParseError,
  kInvalidGraph,
  kInvalidTarget,
  kInvalidConfig,
  kShapeError,
  kMaskError,
  kStaleGraph,
  kMissingGrad,
  kInvalidLabel,
  kDiverged,
  kNoCandidates,
  kMismatch,
  kIoError,
};

const char* error_kind_name(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so that
// callers (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when training produces a non-finite loss.
class DivergedError : public Error {
 public:
  DivergedError(long step, const std::string& message)
      : Error(ErrorKind::kDiverged,
              "step " + std::to_string(step) + ": " + message),
        step_(step) {}

  long step() const { return step_; }

 private:
  long step_;
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return "NotFound";
    case ErrorKind::kEmptyCorpus: return "EmptyCorpus";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kInvalidGraph: return "InvalidGraph";
    case ErrorKind::kInvalidTarget: return "InvalidTarget";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kShapeError: return "ShapeError";
    case ErrorKind::kMaskError: return "MaskError";
    case ErrorKind::kStaleGraph: return "StaleGraph";
    case ErrorKind::kMissingGrad: return "MissingGrad";
    case ErrorKind::kInvalidLabel: return "InvalidLabel";
    case ErrorKind::kDiverged: return "Diverged";
    case ErrorKind::kNoCandidates: return "NoCandidates";
    case ErrorKind::kMismatch: return "Mismatch";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace convstruct
