#pragma once

#include <stdexcept>
#include <string>

namespace tcav {

// Bad user input, malformed files, violated preconditions. CLI exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric failure: divergence, NaN, non-finite results. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when too many runs inside a significance test fail. CLI exit code 4.
struct SignificanceAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tcav
