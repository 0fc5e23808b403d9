#pragma once

#include <stdexcept>
#include <string>

namespace clucdd {

// Base of every error the library raises on bad input or state.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input (JSON records, CSV lists).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad configuration values or incompatible option combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Binary or embedding files that do not match their documented layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Numerical failures while optimizing.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace clucdd
