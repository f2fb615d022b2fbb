#pragma once

#include <stdexcept>
#include <string>

namespace fmnsed {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or configuration values that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A parameter is missing from a WeightStore or has the wrong shape.
class WeightError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (audio, event files, class maps, weight files).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fmnsed
