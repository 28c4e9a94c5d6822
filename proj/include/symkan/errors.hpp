#pragma once

#include <stdexcept>
#include <string>

namespace symkan {

// Base for all library errors. Each subclass maps to one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, unknown names, malformed inputs (exit 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation called on an object in the wrong lifecycle state (exit 2).
class StateError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (exit 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced during evaluation or differentiation (exit 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or version-mismatched files (exit 2).
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace symkan
