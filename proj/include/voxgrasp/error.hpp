#pragma once

#include <stdexcept>
#include <string>

namespace voxgrasp {

/// Invalid argument supplied by the caller (NaN pose, bad config value, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value or position lies outside its admissible range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Tensor or grid dimensions do not agree.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The TSDF holds no zero crossing to sample from.
class NoSurfaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace voxgrasp
