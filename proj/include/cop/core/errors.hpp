#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cop {

enum class ErrorCode {
  DecodeError,
  DuplicateLawId,
  UnknownLaw,
  NonDeterministicLaw,
  AlreadyAdopted,
  NotActive,
  UnknownController,
  CapacityExceeded,
  ReconstructionRace,
  LedgerUnavailable,
  SequenceGap,
  LawMismatch,
  CorruptLedger,
  AuthenticationFailed,
  TransportFailure,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cop
