#include "tfcodit/errors.hpp"

namespace tfcodit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthNotDivisible: return "LengthNotDivisible";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonPositiveAnchor: return "NonPositiveAnchor";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MissingAnchor: return "MissingAnchor";
    case ErrorCode::HorizonTooLong: return "HorizonTooLong";
    case ErrorCode::PatchSizeMismatch: return "PatchSizeMismatch";
    case ErrorCode::MissingSharedQueries: return "MissingSharedQueries";
    case ErrorCode::TimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::SpanGap: return "SpanGap";
    case ErrorCode::SpanOverlap: return "SpanOverlap";
    case ErrorCode::MixedLevels: return "MixedLevels";
    case ErrorCode::UntrainedParams: return "UntrainedParams";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ConfigShapeMismatch: return "ConfigShapeMismatch";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::UnmatchedFiles: return "UnmatchedFiles";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Parse: return "ParseError";
  }
  return "Unknown";
}

}  // namespace tfcodit
