#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elemrag {

enum class ErrorCode {
  MalformedInput,
  NoValidRecords,
  MixedDocuments,
  ClientError,
  MalformedResponse,
  MissingMetadata,
  EmptyText,
  DimensionMismatch,
  DuplicateId,
  EmptyIndex,
  CorruptIndex,
  NoChunks,
  TokenBudgetExceeded,
  EmptyField,
  UnparseableVerdict,
  Config,
  MissingArtifact,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::NoValidRecords: return "NoValidRecords";
    case ErrorCode::MixedDocuments: return "MixedDocuments";
    case ErrorCode::ClientError: return "ClientError";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::MissingMetadata: return "MissingMetadata";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::NoChunks: return "NoChunks";
    case ErrorCode::TokenBudgetExceeded: return "TokenBudgetExceeded";
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::Config: return "Config";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a prompt does not fit the generator's context window.
class TokenBudgetExceeded : public Error {
 public:
  TokenBudgetExceeded(std::size_t estimate, std::size_t limit)
      : Error(ErrorCode::TokenBudgetExceeded,
              "prompt estimated at " + std::to_string(estimate) + " tokens exceeds budget of " +
                  std::to_string(limit)),
        estimate_(estimate),
        limit_(limit) {}

  std::size_t estimate() const noexcept { return estimate_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t estimate_;
  std::size_t limit_;
};

}  // namespace elemrag
