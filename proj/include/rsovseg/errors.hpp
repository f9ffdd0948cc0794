#pragma once

#include <stdexcept>
#include <string>

namespace rsovseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions violate an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside the accepted domain (bad angle, missing placeholder,
/// unknown class name, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed run configuration, manifest or checkpoint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data files are unreadable or contain invalid values.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A loss or activation became non-finite.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsovseg
