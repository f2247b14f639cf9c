#pragma once

#include <stdexcept>
#include <string>

namespace ganno {

// Invalid shapes, lengths or parameters supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated serialized bytes.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset files missing or not in the expected format.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition of an operation was broken (e.g. stepping a finished episode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ganno
