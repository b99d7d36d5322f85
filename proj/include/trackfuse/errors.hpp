#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trackfuse {

// Base for every error raised by the library. Each subclass names one
// failure kind so callers (and the CLI exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TRACKFUSE_ERROR(Name)               \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

TRACKFUSE_ERROR(ShapeMismatch);
TRACKFUSE_ERROR(NotScalar);
TRACKFUSE_ERROR(EmptyStream);
TRACKFUSE_ERROR(ZeroMagnitude);
TRACKFUSE_ERROR(BadWindow);
TRACKFUSE_ERROR(TooShort);
TRACKFUSE_ERROR(BehindCamera);
TRACKFUSE_ERROR(Singular);
TRACKFUSE_ERROR(AtInfinity);
TRACKFUSE_ERROR(Degenerate);
TRACKFUSE_ERROR(NonInvertible);
TRACKFUSE_ERROR(DegenerateBox);
TRACKFUSE_ERROR(EmptySet);
TRACKFUSE_ERROR(EmptyDataset);
TRACKFUSE_ERROR(WLMismatch);
TRACKFUSE_ERROR(MissingCheckpoint);
TRACKFUSE_ERROR(MissingCalibration);
TRACKFUSE_ERROR(NothingToReport);
TRACKFUSE_ERROR(ConfigError);
TRACKFUSE_ERROR(IoError);

#undef TRACKFUSE_ERROR

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A record is missing a required field.
class SchemaError : public Error {
 public:
  explicit SchemaError(std::string field, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": missing field \"" + field + "\""
                   : "missing field \"" + field + "\""),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace trackfuse
