#pragma once

#include <stdexcept>
#include <string>

namespace uscore {

// Base of every error raised by the toolkit. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (shapes, ranges, empty inputs).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents: bad magic, inconsistent dimensions, index gaps.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid UTF-8 in a text input. Carries the 1-based line number.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& path, std::size_t line)
      : Error(path + ":" + std::to_string(line) + ": invalid UTF-8"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-numeric field in a tabular input. Carries the 1-based row number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row) : Error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// A token has no vector in the embedding store it was looked up in.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Input carries no usable signal (e.g. all word pairs identical for UMD).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Correlation requested on a constant vector.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

}  // namespace uscore
