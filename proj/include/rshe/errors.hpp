#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rshe {

// Input that can never be valid: bad configuration, bad shapes, parameters
// outside their admissible range.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class CoefficientError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

// Valid input for which a numerical procedure did not deliver.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

class BlowUpError : public NumericalError {
public:
  BlowUpError(const std::string& what, std::size_t step_index)
      : NumericalError(what), step(step_index) {}
  std::size_t step;
};

}  // namespace rshe
