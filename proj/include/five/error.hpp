#pragma once

#include <stdexcept>
#include <string>

namespace five {

// Base for every error raised by the library. Maps to CLI exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: configs, manifests, malformed files, invalid arguments.
// Maps to CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A reduction or normalization has nothing valid to work on
// (fully masked row, zero-norm vector, description with no known fields).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, stale gradients, nondeterminism,
// contract violations between modules.
class StateError : public Error {
 public:
  using Error::Error;
};

// Text that cannot be turned into a structured description.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite values surfaced during computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace five
