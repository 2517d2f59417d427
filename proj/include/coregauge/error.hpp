#pragma once

#include <stdexcept>
#include <string>

namespace coregauge {

// Malformed input: bad configuration, out-of-range arguments, unreadable files.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Misuse of an API (index out of range, missing coordinate).
class UsageError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// The instance is too large for an exhaustive routine.
class CapabilityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A result that contradicts a structural guarantee, e.g. an infeasible core.
// Always indicates a bug upstream (stable outcomes exist for every market).
class InconsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace coregauge
