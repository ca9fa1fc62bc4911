#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace physr {

enum class ErrorCode {
  InvalidArgument,
  UnknownCategory,
  UnknownSubcategory,
  MismatchedPair,
  EmptyInput,
  AllSourcesEmpty,
  ParseError,
  WrongArity,
  NotEnoughDistractors,
  InvalidLog,
  GroupTooSmall,
  LengthMismatch,
  EmptySequence,
  Timeout,
  TransportError,
  EndpointError,
  AuthMissing,
  UnknownFixtureKey,
  InvalidBounds,
  CheckpointCorrupt,
  Io,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::UnknownSubcategory: return "UnknownSubcategory";
    case ErrorCode::MismatchedPair: return "MismatchedPair";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::AllSourcesEmpty: return "AllSourcesEmpty";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::WrongArity: return "WrongArity";
    case ErrorCode::NotEnoughDistractors: return "NotEnoughDistractors";
    case ErrorCode::InvalidLog: return "InvalidLog";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::EndpointError: return "EndpointError";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::UnknownFixtureKey: return "UnknownFixtureKey";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::CheckpointCorrupt: return "CheckpointCorrupt";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Domain error raised by every physr operation. The CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Malformed input; `line` is 1-based (0 when not line-oriented).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError,
              line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-success HTTP status returned by a model endpoint.
class EndpointError : public Error {
 public:
  EndpointError(int status, std::string body_excerpt)
      : Error(ErrorCode::EndpointError,
              "status " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(std::move(body_excerpt)) {}

  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

}  // namespace physr
