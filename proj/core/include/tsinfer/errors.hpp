#pragma once

#include <stdexcept>

namespace tsinfer {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix expected to be symmetric is not, beyond tolerance.
class NotSymmetricError : public Error {
 public:
  using Error::Error;
};

// Matrix is not positive semidefinite within tolerance.
class NotPsdError : public Error {
 public:
  using Error::Error;
};

// Hessian (or another matrix that must be inverted) is numerically singular.
class SingularHessianError : public Error {
 public:
  using Error::Error;
};

// An operation requiring at least one observation received none.
class EmptySampleError : public Error {
 public:
  using Error::Error;
};

// Two inputs that must have matching dimensions do not.
class SizeMismatchError : public Error {
 public:
  using Error::Error;
};

// Confidence level outside the valid open interval.
class LevelMismatchError : public Error {
 public:
  using Error::Error;
};

// Design matrix is rank deficient.
class RankDeficientError : public Error {
 public:
  using Error::Error;
};

// Iterative optimizer failed to reach its stopping rule.
class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

// Optimum sits on the boundary of the admissible parameter set.
class BoundaryOptimumError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A clipped exponent (or similar guard) is binding where it must not.
class OverflowError : public Error {
 public:
  using Error::Error;
};

// More than half of the parameter redraws had to be clamped to the
// constraint set; mean-based summaries of those draws are unreliable.
class ConstraintExhaustedError : public Error {
 public:
  using Error::Error;
};

// Scalar argument outside its admissible range.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (CSV schema violation); message names the location.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsinfer
