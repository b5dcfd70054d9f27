#include "dimma/errors.hpp"

namespace dimma {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kRange: return "RangeError";
    case ErrorCode::kIO: return "IOError";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNoObservedBins: return "NoObservedBins";
    case ErrorCode::kUnfittedStats: return "UnfittedStats";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kTooSmall: return "TooSmall";
    case ErrorCode::kNoPairsFound: return "NoPairsFound";
    case ErrorCode::kMissingSubdir: return "MissingSubdir";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kUnknownFilename: return "UnknownFilename";
    case ErrorCode::kFormat: return "FormatError";
  }
  return "Error";
}

}  // namespace dimma
