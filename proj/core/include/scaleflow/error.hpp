#pragma once

#include <stdexcept>
#include <string>

namespace scaleflow {

enum class ErrorCode {
  MissingFile,
  UnsupportedFormat,
  CorruptStream,
  InvalidArgument,
  NumericalFailure,
  NoMatches,
};

/// Library-wide exception carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace scaleflow
