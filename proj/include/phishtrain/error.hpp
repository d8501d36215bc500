#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phishtrain {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kNonCausalProbe,
  kEmptySet,
  kNoUnseenEmails,
  kMissingEmbedding,
  kDimMismatch,
  kZeroVector,
  kDuplicateId,
  kMalformedRecord,
  kValidation,
  kInsufficientEmails,
  kMissingBlock,
  kDegenerate,
  kIo,
  kAuth,
  kTransient,
  kNotFound,
  kConflict,
  kSessionComplete,
  kSessionIncomplete,
  kOutOfRange,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; `code()` lets callers map failures
// onto exit codes and HTTP statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace phishtrain
