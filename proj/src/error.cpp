#include "pgsr/error.hpp"

namespace pgsr {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonSquare: return "NonSquare";
    case ErrorCode::AsymmetryBeyondTolerance: return "AsymmetryBeyondTolerance";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::UnknownSensor: return "UnknownSensor";
    case ErrorCode::EmptySlot: return "EmptySlot";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NonPositiveLambdaMax: return "NonPositiveLambdaMax";
    case ErrorCode::SpectralRadiusGeOne: return "SpectralRadiusGeOne";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::RaggedInput: return "RaggedInput";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

}  // namespace pgsr
