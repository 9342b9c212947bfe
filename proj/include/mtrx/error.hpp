#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mtrx {

/// Error classes raised across the engine. Each maps to a distinct CLI exit code.
enum class ErrorCode {
  // semantic_encoding
  EmptyContent,
  EncoderBackendUnavailable,
  DimensionMismatch,
  ZeroVector,
  // experience_base
  DuplicateId,
  EncoderMismatch,
  InvariantViolation,
  IoFailure,
  VersionUnsupported,
  ChecksumMismatch,
  CorruptFile,
  // vision_toolkit
  DuplicateTool,
  UnknownTool,
  ArgsInvalid,
  BackendUnavailable,
  RegionOutOfBounds,
  // agent_loop
  PolicyUnavailable,
  MalformedPolicyOutput,
  // reward_grpo
  GroupTooSmall,
  LengthMismatch,
  ConfigInvalid,
  // labeling
  DegenerateTrajectory,
  // evaluation
  EmptyEvalSet,
  JudgeUnavailable,
  MalformedJudgeResponse,
  SubscoreOutOfRange,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyContent: return "EmptyContent";
    case ErrorCode::EncoderBackendUnavailable: return "EncoderBackendUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EncoderMismatch: return "EncoderMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::DuplicateTool: return "DuplicateTool";
    case ErrorCode::UnknownTool: return "UnknownTool";
    case ErrorCode::ArgsInvalid: return "ArgsInvalid";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::RegionOutOfBounds: return "RegionOutOfBounds";
    case ErrorCode::PolicyUnavailable: return "PolicyUnavailable";
    case ErrorCode::MalformedPolicyOutput: return "MalformedPolicyOutput";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::DegenerateTrajectory: return "DegenerateTrajectory";
    case ErrorCode::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorCode::MalformedJudgeResponse: return "MalformedJudgeResponse";
    case ErrorCode::SubscoreOutOfRange: return "SubscoreOutOfRange";
  }
  return "Unknown";
}

/// Module that owns an error class; used for module-qualified CLI messages.
constexpr std::string_view owning_module(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyContent:
    case ErrorCode::EncoderBackendUnavailable:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ZeroVector:
      return "semantic_encoding";
    case ErrorCode::DuplicateId:
    case ErrorCode::EncoderMismatch:
    case ErrorCode::InvariantViolation:
    case ErrorCode::IoFailure:
    case ErrorCode::VersionUnsupported:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::CorruptFile:
      return "experience_base";
    case ErrorCode::DuplicateTool:
    case ErrorCode::UnknownTool:
    case ErrorCode::ArgsInvalid:
    case ErrorCode::BackendUnavailable:
    case ErrorCode::RegionOutOfBounds:
      return "vision_toolkit";
    case ErrorCode::PolicyUnavailable:
    case ErrorCode::MalformedPolicyOutput:
      return "agent_loop";
    case ErrorCode::GroupTooSmall:
    case ErrorCode::LengthMismatch:
      return "reward_grpo";
    case ErrorCode::ConfigInvalid:
      return "config";
    case ErrorCode::DegenerateTrajectory:
      return "labeling";
    case ErrorCode::EmptyEvalSet:
    case ErrorCode::JudgeUnavailable:
    case ErrorCode::MalformedJudgeResponse:
    case ErrorCode::SubscoreOutOfRange:
      return "evaluation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mtrx
