#include "dqopt/errors.hpp"

namespace dqopt {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::NegativeStandardPart: return "NegativeStandardPart";
    case Errc::InfinitesimalSqrt: return "InfinitesimalSqrt";
    case Errc::NonUnitAxis: return "NonUnitAxis";
    case Errc::NotAppreciable: return "NotAppreciable";
    case Errc::NonUnitRotation: return "NonUnitRotation";
    case Errc::NonImaginaryTranslation: return "NonImaginaryTranslation";
    case Errc::NonUnitValue: return "NonUnitValue";
    case Errc::NonImaginaryValue: return "NonImaginaryValue";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Infeasible: return "Infeasible";
    case Errc::MaxIterations: return "MaxIterations";
    case Errc::DegenerateConstraintGradients: return "DegenerateConstraintGradients";
    case Errc::InvalidPose: return "InvalidPose";
    case Errc::TooFewMotions: return "TooFewMotions";
    case Errc::NoGroundTruth: return "NoGroundTruth";
    case Errc::DisconnectedGraph: return "DisconnectedGraph";
    case Errc::ParseError: return "ParseError";
    case Errc::NonUnitMeasurement: return "NonUnitMeasurement";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dqopt
