#pragma once

#include <stdexcept>
#include <string>

namespace varsep {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed user input: config files, CLI flags, unknown tags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Singular systems, loss of coercivity, non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

}  // namespace varsep
