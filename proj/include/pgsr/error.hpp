#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pgsr {

enum class ErrorCode {
  NonSquare,
  AsymmetryBeyondTolerance,
  NegativeWeight,
  Disconnected,
  ConvergenceFailure,
  DimensionMismatch,
  OutOfRange,
  UnknownSensor,
  EmptySlot,
  NonFiniteState,
  NonPositiveLambdaMax,
  SpectralRadiusGeOne,
  TooLarge,
  ZeroReference,
  RaggedInput,
  Config,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace pgsr
