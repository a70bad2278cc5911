#pragma once

#include <stdexcept>
#include <string>

namespace drowsy {

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension mismatch. The message names the offending axis.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid argument or precondition violation outside of shapes.
struct ValidationError : Error {
  using Error::Error;
};

/// File format or filesystem failure. The message names the file.
struct IoError : Error {
  using Error::Error;
};

/// Index or window outside the valid range.
struct RangeError : Error {
  using Error::Error;
};

/// Bad configuration key or value. The message names the key.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace drowsy
