#pragma once

#include <stdexcept>
#include <string>

namespace entdec {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A token/row/entity index falls outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// An API was called in a way its contract forbids.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (datasets, checkpoints, configs).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required (e.g. a diverged loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace entdec
