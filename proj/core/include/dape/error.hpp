#pragma once

#include <stdexcept>
#include <string>

namespace dape {

/// Error categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
  kConfig,
  kShape,
  kNumeric,
  kValidation,
  kState,
  kParse,
  kIngestion,
  kClient,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DAPE_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

DAPE_DEFINE_ERROR(ConfigError, kConfig)
DAPE_DEFINE_ERROR(ShapeError, kShape)
DAPE_DEFINE_ERROR(NumericError, kNumeric)
DAPE_DEFINE_ERROR(ValidationError, kValidation)
DAPE_DEFINE_ERROR(StateError, kState)
DAPE_DEFINE_ERROR(IngestionError, kIngestion)
DAPE_DEFINE_ERROR(IoError, kIo)

#undef DAPE_DEFINE_ERROR

/// Malformed manifest or record. Carries the 1-based line number of the
/// offending record, 0 when there is no line locus.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::kParse, what), line_(0) {}
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::kParse, what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure talking to an external annotation/embedding service.
class ClientError : public Error {
 public:
  ClientError(const std::string& what, bool retryable)
      : Error(ErrorKind::kClient, what), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

}  // namespace dape
