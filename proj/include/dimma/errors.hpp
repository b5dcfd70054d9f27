#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dimma {

enum class ErrorCode {
  kFileNotFound,
  kUnsupportedFormat,
  kRange,
  kIO,
  kShapeMismatch,
  kEmptyInput,
  kNoObservedBins,
  kUnfittedStats,
  kNonFiniteLoss,
  kInvalidConfig,
  kEmptyCorpus,
  kTooSmall,
  kNoPairsFound,
  kMissingSubdir,
  kDimensionMismatch,
  kEmptyDataset,
  kUnknownFilename,
  kFormat,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dimma
