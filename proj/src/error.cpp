// SPDX-License-Identifier: Apache-2.0

#include "atrl/error.hpp"

namespace atrl {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kDimOverflow: return "DimOverflow";
    case ErrorCode::kInvalidDimension: return "InvalidDimension";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kNegativeValue: return "NegativeValue";
    case ErrorCode::kNotRowStochastic: return "NotRowStochastic";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kUnknownModalityLabel: return "UnknownModalityLabel";
    case ErrorCode::kMalformedInput: return "MalformedInput";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kTopLayersOutOfRange: return "TopLayersOutOfRange";
    case ErrorCode::kEmptyVisualSet: return "EmptyVisualSet";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kTooManyClusters: return "TooManyClusters";
    case ErrorCode::kEmptyCluster: return "EmptyCluster";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kKMismatch: return "KMismatch";
    case ErrorCode::kBadFraction: return "BadFraction";
    case ErrorCode::kNonPositiveRatio: return "NonPositiveRatio";
    case ErrorCode::kInvalidParameter: return "InvalidParameter";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) noexcept {
  return code != ErrorCode::kInvariantViolation;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace atrl
