#pragma once

#include <stdexcept>
#include <string>

namespace vicsek {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two fields or grids that must agree do not.
class GridMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The director J/|J| is undefined somewhere (|J| = 0 with eps = 0).
class AdmissibilityError : public std::runtime_error {
 public:
  AdmissibilityError(const std::string& what, std::size_t cell)
      : std::runtime_error(what), cell_(cell) {}
  std::size_t cell() const noexcept { return cell_; }

 private:
  std::size_t cell_;
};

/// Time step too large for an explicit part of a scheme.
class StabilityError : public std::runtime_error {
 public:
  StabilityError(const std::string& what, double cfl, double limit)
      : std::runtime_error(what), cfl_(cfl), limit_(limit) {}
  double cfl() const noexcept { return cfl_; }
  double limit() const noexcept { return limit_; }

 private:
  double cfl_;
  double limit_;
};

/// Non-finite values appeared during a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vicsek
