#pragma once

#include <stdexcept>
#include <string>

namespace mvk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Source-file problems during ingest; carries file and line context.
class FormatError : public Error {
 public:
  FormatError(const std::string& file, size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what),
        file(file),
        line(line) {}
  std::string file;
  size_t line = 0;
};

class MissingDimensions : public Error {
 public:
  using Error::Error;
};

class InsufficientPool : public Error {
 public:
  using Error::Error;
};

class EmptyAnswer : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class DegenerateReference : public Error {
 public:
  using Error::Error;
};

class CorpusTooSmall : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  enum class Kind { Timeout, RateLimited, BadRequest, AuthFailed, ServerError, Protocol };

  TransportError(Kind kind, int status, int retries, const std::string& what)
      : Error(what), kind(kind), status(status), retries(retries) {}

  Kind kind;
  int status = 0;   // HTTP status, 0 when no response was received
  int retries = 0;  // retries performed before giving up
};

inline const char* to_string(TransportError::Kind k) {
  switch (k) {
    case TransportError::Kind::Timeout: return "timeout";
    case TransportError::Kind::RateLimited: return "rate_limited";
    case TransportError::Kind::BadRequest: return "bad_request";
    case TransportError::Kind::AuthFailed: return "auth_failed";
    case TransportError::Kind::ServerError: return "server_error";
    case TransportError::Kind::Protocol: return "protocol";
  }
  return "unknown";
}

}  // namespace mvk
