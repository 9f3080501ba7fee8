#pragma once

#include <stdexcept>
#include <string>

namespace atr {

// Bad input: malformed arguments, violated preconditions, inconsistent data.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem or codec failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace atr
