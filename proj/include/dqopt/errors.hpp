#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dqopt {

enum class Errc {
  NegativeStandardPart,
  InfinitesimalSqrt,
  NonUnitAxis,
  NotAppreciable,
  NonUnitRotation,
  NonImaginaryTranslation,
  NonUnitValue,
  NonImaginaryValue,
  ArityMismatch,
  InvalidArgument,
  Infeasible,
  MaxIterations,
  DegenerateConstraintGradients,
  InvalidPose,
  TooFewMotions,
  NoGroundTruth,
  DisconnectedGraph,
  ParseError,
  NonUnitMeasurement,
  Io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason)
      : Error(Errc::ParseError, "line " + std::to_string(line) + ": " + reason), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace dqopt
