#pragma once

#include <stdexcept>
#include <string>

namespace gmop {

// Base of every error raised by the library. Subclasses map onto the CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
  using Error::Error;
};
class ShapeError : public Error {
  using Error::Error;
};
class ConfigError : public Error {
  using Error::Error;
};
class IoError : public Error {
  using Error::Error;
};
class NumericError : public Error {
  using Error::Error;
};
class StateError : public Error {
  using Error::Error;
};
// A precondition the caller must guarantee was violated (e.g. a cyclic graph where a DAG is required).
class ContractError : public Error {
  using Error::Error;
};
class DependencyError : public Error {
  using Error::Error;
};

}  // namespace gmop
