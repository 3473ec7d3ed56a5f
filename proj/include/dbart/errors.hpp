#pragma once

#include <stdexcept>
#include <string>

namespace dbart {

// Base class for failures the CLI maps onto exit codes. `module` names the
// component that raised the error so messages carry their provenance.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }
  virtual int exit_code() const noexcept = 0;

 private:
  std::string module_;
};

// Bad configuration: infeasible bandwidth, unknown scenario, out-of-range
// option values, violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Input could not be parsed or does not match its schema.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// Factorization failure, non-finite intermediate values.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace dbart
