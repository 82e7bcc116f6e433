#pragma once

#include <stdexcept>
#include <string>

namespace genki {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (bad k, mismatched dims, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed or violates a record invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file on disk does not follow the expected layout.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid or incomplete configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Model-side failures: divergence during training, failing scorers.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace genki
