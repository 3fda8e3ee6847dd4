#pragma once

#include <stdexcept>
#include <string>

namespace cfpo {

enum class Errc {
  WrongKind,
  InvalidExample,
  UnrenderableFormat,
  NoAnswerFound,
  UnvisitedEntry,
  EmptyPool,
  UnknownFormat,
  MetricOutOfRange,
  MalformedResponse,
  NoFailures,
  IoError,
  ParseError,
  SizeTooLarge,
  BackendError,
  Timeout,
  RateLimited,
  Fatal,
  MissingFixture,
  VersionMismatch,
  MissingRun,
  ConfigError,
};

const char* errc_name(Errc code);

/// All library errors carry a machine-checkable code plus a human message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace cfpo
