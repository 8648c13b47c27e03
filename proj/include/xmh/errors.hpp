#pragma once

#include <stdexcept>
#include <string>

namespace xmh {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or code lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values, unknown keys, infeasible sizes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in a loss or activation, or a failed numerical check.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public IoError {
 public:
  using IoError::IoError;
};

/// Corrupt header or truncated payload.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace xmh
