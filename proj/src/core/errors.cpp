#include "cop/core/errors.hpp"

namespace cop {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::DuplicateLawId: return "DuplicateLawId";
    case ErrorCode::UnknownLaw: return "UnknownLaw";
    case ErrorCode::NonDeterministicLaw: return "NonDeterministicLaw";
    case ErrorCode::AlreadyAdopted: return "AlreadyAdopted";
    case ErrorCode::NotActive: return "NotActive";
    case ErrorCode::UnknownController: return "UnknownController";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::ReconstructionRace: return "ReconstructionRace";
    case ErrorCode::LedgerUnavailable: return "LedgerUnavailable";
    case ErrorCode::SequenceGap: return "SequenceGap";
    case ErrorCode::LawMismatch: return "LawMismatch";
    case ErrorCode::CorruptLedger: return "CorruptLedger";
    case ErrorCode::AuthenticationFailed: return "AuthenticationFailed";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace cop
