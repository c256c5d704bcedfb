#pragma once

#include <stdexcept>
#include <string>

namespace railopt {

enum class ErrorCategory {
  invalid_config,
  invalid_shape,
  size_mismatch,
  newton_divergence,
  singular_step,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::invalid_config, what) {}
};

/// Raised when a time step cannot be completed; carries the failing step.
class SolverError : public Error {
 public:
  SolverError(ErrorCategory category, int step, const std::string& what)
      : Error(category, what), step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace railopt
