#pragma once

#include <stdexcept>
#include <string>

namespace jrrelp {

// Error taxonomy mirrors the CLI exit codes: validation -> 2,
// divergence -> 3, io -> 4. Anything else escaping main is a bug.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace jrrelp
