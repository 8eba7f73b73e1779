#pragma once

#include <stdexcept>
#include <string>

namespace mppf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (unknown key, bad value, unstable step).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a function (point off-grid, non-nested partitions).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Every particle weight vanished or became NaN.
class FilterDegeneracy : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity produced while integrating a signal.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long step, long cell)
      : Error(what + " (step " + std::to_string(step) + ", cell " + std::to_string(cell) + ")"),
        step_(step),
        cell_(cell) {}
  long step() const noexcept { return step_; }
  long cell() const noexcept { return cell_; }

 private:
  long step_;
  long cell_;
};

/// Sanity limit exceeded (e.g. Poisson mean too large to sample).
class SanityError : public Error {
 public:
  using Error::Error;
};

/// Finite-state integrator produced a negative or non-finite posterior entry.
class IntegratorError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mppf
