#pragma once

#include <stdexcept>

namespace gwad {

// Common base so callers can catch everything the library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct CorruptFileError : Error {
  using Error::Error;
};
struct CorruptCheckpointError : Error {
  using Error::Error;
};
struct NumericsError : Error {
  using Error::Error;
};
struct UndefinedMetricError : Error {
  using Error::Error;
};

}  // namespace gwad
