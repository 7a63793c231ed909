#pragma once

#include <stdexcept>
#include <string>

namespace satlmi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An iterative routine failed to converge or produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A block that must be inverted is (numerically) singular.
class SingularBlock : public Error {
 public:
  using Error::Error;
};

/// A quadratic matrix set has no members.
class EmptySet : public Error {
 public:
  using Error::Error;
};

/// A supplied noise sample lies outside the energy ball.
class NoiseBoundViolation : public Error {
 public:
  using Error::Error;
};

/// No grid point of a synthesis sweep admitted a solution.
class AllInfeasible : public Error {
 public:
  using Error::Error;
};

/// Malformed user input (files, flags, configuration).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace satlmi
