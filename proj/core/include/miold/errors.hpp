#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace miold {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent user input (system files, flags, expressions).
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& message, std::size_t position)
      : InputError(message + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// A structural precondition does not hold (MR1/MR2 failed, singular D, ...).
class ConditionError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: evaluation outside the domain, divergence, singular locus.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Zero test could not find evaluable sample points.
class UndecidableError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace miold
