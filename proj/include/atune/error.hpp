#pragma once

#include <stdexcept>
#include <string>

namespace atune {

// Failure categories map one-to-one onto the CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration, bad arguments or unmet preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Non-finite values, divergence, failed factorizations, out-of-stability input.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// The model cannot provide the requested quantity (e.g. a Hessian).
class UnsupportedError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Thrown when a dimensionless step lies outside the stability region of a scheme.
class StabilityError : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// File contents that cannot be parsed; carries the offending 1-based line.
class ParseError : public IoError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : IoError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace atune
