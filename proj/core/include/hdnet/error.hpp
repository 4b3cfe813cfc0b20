#pragma once

#include <stdexcept>
#include <string>

namespace hdnet {

/// Failure category. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  usage = 1,
  data = 2,
  numeric = 3,
};

/// Base exception for the library. `what()` reads "<module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& module, const std::string& message)
      : std::runtime_error(module + ": " + message), kind_(kind), module_(module) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

/// Malformed or out-of-contract input data.
class DataError : public Error {
 public:
  DataError(const std::string& module, const std::string& message)
      : Error(ErrorKind::data, module, message) {}
};

/// Operand shapes that do not fit the requested operation.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& module, const std::string& message)
      : Error(ErrorKind::numeric, module, message) {}
};

/// Non-finite values or a diverging optimization.
class NumericError : public Error {
 public:
  NumericError(const std::string& module, const std::string& message)
      : Error(ErrorKind::numeric, module, message) {}
};

/// Bad configuration keys/values or command-line usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(ErrorKind::usage, "config", message) {}
};

}  // namespace hdnet
