#pragma once

#include <stdexcept>
#include <string>

namespace hinv {

enum class ErrorCode {
  InvalidArgument,
  Blowup,
  NonFiniteState,
  NoSeparation,
  FrameDegenerate,
  UnsupportedDimension,
  NoCycle,
  EmptySurvivorSet,
  DegenerateSample,
  Uncoverable,
  ConfigInvalid,
  StageFailed,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Blowup: return "Blowup";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NoSeparation: return "NoSeparation";
    case ErrorCode::FrameDegenerate: return "FrameDegenerate";
    case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::NoCycle: return "NoCycle";
    case ErrorCode::EmptySurvivorSet: return "EmptySurvivorSet";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::Uncoverable: return "Uncoverable";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::StageFailed: return "StageFailed";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, message);
}

}  // namespace hinv
