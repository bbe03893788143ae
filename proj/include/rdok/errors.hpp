#pragma once

#include <stdexcept>
#include <string>

namespace rdok {

/// Base class of everything the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
  using Error::Error;
};

/// Input bytes do not follow the expected format (PPM, .rdok container, entropy payload).
class FormatError : public Error {
public:
  using Error::Error;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// An internal invariant failed; indicates a bug rather than bad input.
class InvariantViolation : public Error {
public:
  using Error::Error;
};

} // namespace rdok
