#pragma once

#include <stdexcept>
#include <string>

namespace cqlqg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix required to be Hurwitz is not (or a Kronecker sum is singular).
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Eigen-solver failure, non-finite data, or a numerically singular solve.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input violates a structural requirement (antisymmetry, nonsingularity, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A linear matrix equation has no unique solution because of a resonant spectrum.
class DegenerateEquationError : public Error {
 public:
  using Error::Error;
};

}  // namespace cqlqg
