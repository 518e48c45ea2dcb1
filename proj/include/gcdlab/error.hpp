#pragma once

#include <stdexcept>
#include <string>

namespace gcdlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar argument is outside its admissible range (e.g. a non-positive temperature).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A training step produced a NaN or Inf; the message names the first offending term.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class SizingError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration or data file. Carries the line (1-based, 0 if unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// A configuration value violates a documented constraint.
class RangeError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcdlab
