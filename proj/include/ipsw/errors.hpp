#pragma once

#include <stdexcept>
#include <string>

namespace ipsw {

// Bad inputs supplied by the user: config files, CLI arguments, requests that
// reference unknown names or infeasible combinations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structurally invalid population/scenario/weighting definitions. A subtype of
// config problems so the CLI maps both to the same exit code.
class SpecificationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Math-level failures: formula domain violations, solver breakdowns,
// degenerate weights.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem and serialization failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ipsw
