#pragma once

#include <stdexcept>
#include <string>

namespace spg {

// Dimension or channel-count mismatch between operands.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input is well-shaped but violates a value contract (labels out of range,
// unnormalized probabilities, non-binary visibility, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a loss or gradient stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spg
