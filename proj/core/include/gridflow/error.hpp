#pragma once

#include <stdexcept>
#include <string>

namespace gridflow {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case or data file. Carries the 1-based position of the offending token.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// Well-formed input that violates a data-model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File layout or dimension disagrees with the expected schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Degenerate numerics (zero admittance diagonal, zero voltage, singular systems).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gridflow
