#pragma once

#include <stdexcept>
#include <string>

namespace relit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on a value (bad dimensions, out-of-range parameter).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File system or decoding failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or command-line override failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace relit
