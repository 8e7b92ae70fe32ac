// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atrl {

enum class ErrorCode {
  kBadMagic,
  kDimOverflow,
  kInvalidDimension,
  kTruncatedPayload,
  kNonFiniteValue,
  kNegativeValue,
  kNotRowStochastic,
  kIoFailure,
  kUnknownModalityLabel,
  kMalformedInput,
  kLengthMismatch,
  kTopLayersOutOfRange,
  kEmptyVisualSet,
  kIndexOutOfRange,
  kTooManyClusters,
  kEmptyCluster,
  kGroupTooSmall,
  kKMismatch,
  kBadFraction,
  kNonPositiveRatio,
  kInvalidParameter,
  kInvariantViolation,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Input errors map to CLI exit code 1; everything else is an internal failure.
bool is_input_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace atrl
