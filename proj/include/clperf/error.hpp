#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clperf {

/// Reason codes shared by exceptions and exclusion records.
enum class ErrorCode {
  InvalidArgument,
  EmptySource,
  NonLiteralDimension,
  ParseError,
  UnsupportedType,
  AliasEscape,
  NoArrayAccess,
  ProbeRuntimeFailure,
  ExtentOverflow,
  NegativeExtent,
  NoAccess,
  DegenerateFit,
  NonPositiveSize,
  NonAffine,
  NoValidInput,
  CompileError,
  LaunchError,
  Timeout,
  OutOfMemory,
  OutOfBounds,
  Unsupported,
  TooFewSamples,
  SingularFit,
  NonPositiveTime,
  LengthMismatch,
  NonPositiveTarget,
  MissingStageInput,
  ConfigError,
  IoError,
  Overflow,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::EmptySource: return "empty_source";
    case ErrorCode::NonLiteralDimension: return "non_literal_dimension";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::UnsupportedType: return "unsupported_type";
    case ErrorCode::AliasEscape: return "alias_escape";
    case ErrorCode::NoArrayAccess: return "no_array_access";
    case ErrorCode::ProbeRuntimeFailure: return "probe_runtime_failure";
    case ErrorCode::ExtentOverflow: return "extent_overflow";
    case ErrorCode::NegativeExtent: return "negative_extent";
    case ErrorCode::NoAccess: return "no_access";
    case ErrorCode::DegenerateFit: return "degenerate_fit";
    case ErrorCode::NonPositiveSize: return "non_positive_size";
    case ErrorCode::NonAffine: return "non_affine";
    case ErrorCode::NoValidInput: return "no_valid_input";
    case ErrorCode::CompileError: return "compile_error";
    case ErrorCode::LaunchError: return "launch_error";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::OutOfMemory: return "out_of_memory";
    case ErrorCode::OutOfBounds: return "out_of_bounds";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::TooFewSamples: return "too_few_samples";
    case ErrorCode::SingularFit: return "singular_fit";
    case ErrorCode::NonPositiveTime: return "non_positive_time";
    case ErrorCode::LengthMismatch: return "length_mismatch";
    case ErrorCode::NonPositiveTarget: return "non_positive_target";
    case ErrorCode::MissingStageInput: return "missing_stage_input";
    case ErrorCode::ConfigError: return "config_error";
    case ErrorCode::IoError: return "io_error";
    case ErrorCode::Overflow: return "overflow";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace clperf
