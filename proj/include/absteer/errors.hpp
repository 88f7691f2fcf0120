#pragma once

#include <stdexcept>
#include <string>

namespace absteer {

// Input or invariant violation: bad file contents, malformed data, contract
// breaches detectable before any work is done. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures (missing file, short write). Maps to CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during a computation (divergence, degenerate geometry).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace absteer
