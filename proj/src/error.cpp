#include "needle/error.hpp"

namespace needle {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDomain: return "InvalidDomain";
    case ErrorCode::InvalidN: return "InvalidN";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::DegenerateInstance: return "DegenerateInstance";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::CertificateFailure: return "CertificateFailure";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::NonpositiveDensity: return "NonpositiveDensity";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace needle
