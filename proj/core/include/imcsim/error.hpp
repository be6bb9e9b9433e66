#pragma once

#include <stdexcept>
#include <string>

namespace imcsim {

/// Base of every error the library throws. Subclasses let callers (the CLI in
/// particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the representable range of a number format.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A scalar parameter (clip level, scale, reference voltage) is invalid.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The matrix mapping does not fit the physical array.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable/unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace imcsim
