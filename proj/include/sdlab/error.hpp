#pragma once

#include <stdexcept>
#include <string>

namespace sdlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input is not a probability distribution (negative, non-finite, all-zero).
struct InvalidDistribution : Error {
  using Error::Error;
};

// p(y) > 0 where q(y) == 0 in a KL divergence.
struct SupportMismatch : Error {
  using Error::Error;
};

// Operands do not share an index structure.
struct ShapeMismatch : Error {
  using Error::Error;
};

struct ParameterError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Non-finite loss or gradient during training. what() carries the batch dump.
struct NumericalAbort : Error {
  using Error::Error;
};

}  // namespace sdlab
