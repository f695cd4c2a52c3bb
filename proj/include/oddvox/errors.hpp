#pragma once

#include <stdexcept>
#include <string>

namespace oddvox {

// Base class for all errors raised by the library. The CLI maps the
// concrete types below onto process exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration, bad op usage, shape mismatches. Exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Missing/corrupt files, format-version mismatches, invalid data values,
// infeasible generation requests. Exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class GenerationError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values where finite ones are required. Exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Remote chat-endpoint failures. Exit code 5.
class ExternalServiceError : public Error {
 public:
  using Error::Error;
};

}  // namespace oddvox
