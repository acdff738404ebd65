#pragma once

#include <stdexcept>
#include <string>

namespace coffee {

// Bad input data or configuration. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class RangeError : public DataError {
 public:
  using DataError::DataError;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Metric undefined for the given batch (single class, empty curve, ...).
class UndefinedMetricError : public DataError {
 public:
  using DataError::DataError;
};

class PoisonedGradientError : public std::runtime_error {
 public:
  PoisonedGradientError(const std::string& param, long step = -1)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'" +
                           (step >= 0 ? " at step " + std::to_string(step) : std::string{})),
        param_(param) {}

  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

}  // namespace coffee
