#pragma once

#include <stdexcept>
#include <string>

namespace kgnpro {

// Stable error categories; mirrored one-to-one by the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  BehindCamera,
  LogMapSingular,
  Underdetermined,
  NumericalFailure,
  NoConvergentSolution,
  DegenerateSampleSet,
  MissingSupervisionTarget,
  SceneTooCrowded,
  ParseError,
  UnsupportedSchema,
  IoError,
  Usage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace kgnpro
