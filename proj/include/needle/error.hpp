#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace needle {

enum class ErrorCode {
  InvalidDomain,
  InvalidN,
  EmptySample,
  DegenerateInstance,
  NumericalFailure,
  CertificateFailure,
  TooFewSamples,
  NonpositiveDensity,
  InvalidParams,
  SyntaxError,
  UnknownIdentifier,
  HypothesisViolated,
  ConfigError,
  IoError,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Parse errors carry the byte offset into the source string.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, std::size_t offset, const std::string& message)
      : Error(code, message + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace needle
