#pragma once

#include <stdexcept>

namespace rvf {

/// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Missing, malformed or inconsistent data on disk.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or filtering.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rvf
