#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lobfill {

enum class ErrorCode {
  UnknownOrderId,
  SequenceGap,
  CrossedBook,
  InvalidMessage,
  EmptyStream,
  EmptySide,
  SpreadTooNarrow,
  OrderNotFound,
  InsufficientTrades,
  EmptyInput,
  SingleClass,
  NonFiniteLoss,
  DimensionMismatch,
  InadmissibleDistance,
  NonpositiveDenominator,
  ModelUnavailable,
  InsufficientBuckets,
  LatencyTooLarge,
  MissingPriceMove,
  PeriodOverlap,
  ConfigInvalid,
  InputMissing,
  ParseError,
  DegenerateRiskSet,
  DegenerateValue,
  ZeroCensoringSurvival,
  ConditionViolated,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownOrderId: return "UnknownOrderId";
    case ErrorCode::SequenceGap: return "SequenceGap";
    case ErrorCode::CrossedBook: return "CrossedBook";
    case ErrorCode::InvalidMessage: return "InvalidMessage";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::EmptySide: return "EmptySide";
    case ErrorCode::SpreadTooNarrow: return "SpreadTooNarrow";
    case ErrorCode::OrderNotFound: return "OrderNotFound";
    case ErrorCode::InsufficientTrades: return "InsufficientTrades";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InadmissibleDistance: return "InadmissibleDistance";
    case ErrorCode::NonpositiveDenominator: return "NonpositiveDenominator";
    case ErrorCode::ModelUnavailable: return "ModelUnavailable";
    case ErrorCode::InsufficientBuckets: return "InsufficientBuckets";
    case ErrorCode::LatencyTooLarge: return "LatencyTooLarge";
    case ErrorCode::MissingPriceMove: return "MissingPriceMove";
    case ErrorCode::PeriodOverlap: return "PeriodOverlap";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::InputMissing: return "InputMissing";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DegenerateRiskSet: return "DegenerateRiskSet";
    case ErrorCode::DegenerateValue: return "DegenerateValue";
    case ErrorCode::ZeroCensoringSurvival: return "ZeroCensoringSurvival";
    case ErrorCode::ConditionViolated: return "ConditionViolated";
  }
  return "Unknown";
}

/// Exception type thrown by every module. The code is stable and is what the
/// CLI reports in its machine-readable error output.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace lobfill
