#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace s2fp8 {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, format parameters, or configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Operand shapes that do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A NaN or infinity where a finite value is required.
class NumericError : public Error {
public:
  NumericError(const std::string& what, std::size_t index)
      : Error(what + " (element " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

/// Malformed file contents or a failed read/write.
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace s2fp8
