#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tfcodit {

enum class ErrorCode {
  LengthNotDivisible,
  NonFiniteInput,
  ShapeMismatch,
  NonPositiveAnchor,
  TooShort,
  MissingAnchor,
  HorizonTooLong,
  PatchSizeMismatch,
  MissingSharedQueries,
  TimestepOutOfRange,
  UnknownToken,
  EmptyBatch,
  SpanGap,
  SpanOverlap,
  MixedLevels,
  UntrainedParams,
  InvalidSpec,
  InvalidConfig,
  ConfigShapeMismatch,
  MissingData,
  UnmatchedFiles,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tfcodit
