#pragma once

#include <stdexcept>
#include <string>

namespace smgaa {

// Base of every error thrown by the library. The `what()` string is prefixed
// with the module that raised it, e.g. "model: ...".
class Error : public std::runtime_error {
 public:
  Error(const std::string& module, const std::string& msg)
      : std::runtime_error(module + ": " + msg) {}
};

// Invalid hyperparameter, geometry or shape combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, degenerate statistics.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File, format and parse failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Misuse of the gradient tape (double backward, non-scalar loss, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace smgaa
