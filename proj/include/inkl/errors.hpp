#pragma once

#include <stdexcept>
#include <string>

namespace inkl {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's precondition (k > N, empty cloud, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong lifecycle state (e.g. backward twice).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient input to a least-squares fit.
class RankError : public Error {
 public:
  using Error::Error;
};

/// Missing or malformed model input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// File system failure (unreadable/unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace inkl
