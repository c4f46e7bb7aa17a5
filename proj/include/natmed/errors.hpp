#pragma once

#include <stdexcept>

namespace natmed {

// Error taxonomy used by the CLI for exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace natmed
