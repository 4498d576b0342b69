#pragma once

#include <stdexcept>
#include <string>

namespace dr {

/// Base class for all errors raised by the engine.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, dimension mismatches, validation failures.
struct InputError : Error {
  using Error::Error;
};

/// Non-finite value encountered where the computation must abort.
struct NumericError : Error {
  using Error::Error;
};

/// Syntax error with source position.
struct ParseError : InputError {
  ParseError(const std::string& what, int line, int column)
      : InputError(what + " at line " + std::to_string(line) + ", column " +
                   std::to_string(column)),
        line(line),
        column(column) {}
  int line;
  int column;
};

}  // namespace dr
