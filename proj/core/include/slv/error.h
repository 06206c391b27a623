#pragma once

#include <stdexcept>
#include <string>

namespace slv {

// Malformed or out-of-contract arguments. Maps to CLI exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent configuration (thresholds, schedules).
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// File content that fails schema validation. The message names the record
// and field.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

// Non-finite losses or degenerate log arguments. Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace slv
