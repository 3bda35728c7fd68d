#pragma once

#include <stdexcept>
#include <string>

namespace lfaa {

/// Base of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument or precondition violation (bad k, batch size, class index...).
struct ArgumentError : Error {
  using Error::Error;
};

/// Incompatible tensor or image shapes.
struct ShapeError : Error {
  using Error::Error;
};

/// Filesystem or decoding failure. The message always names the offending path.
struct IoError : Error {
  using Error::Error;
};

/// Malformed or inconsistent checkpoint / config content.
struct FormatError : Error {
  using Error::Error;
};

/// Operation refused because of model state (e.g. training a frozen classifier).
struct StateError : Error {
  using Error::Error;
};

}  // namespace lfaa
