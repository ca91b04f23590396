#pragma once

#include <stdexcept>
#include <string>

namespace dpir {

// Invalid parameters or unknown names in configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Index or range outside the addressed domain.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Malformed bytes: keys, table files, sidecars, wire frames.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An evaluation needs more intermediate memory than the configured budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Socket, timeout and remote-error failures.
class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpir
