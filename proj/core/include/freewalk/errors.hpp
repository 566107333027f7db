#pragma once

#include <stdexcept>
#include <string>

namespace freewalk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment description or malformed input text.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A configured resource cap (atoms, ball size, grid points) would be exceeded.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, double mass_deficit = 0.0)
      : Error(what), mass_deficit_(mass_deficit) {}
  double mass_deficit() const noexcept { return mass_deficit_; }

 private:
  double mass_deficit_;
};

// Two routes that must agree do not, or a solver left its bracket.
class NumericalInconsistency : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of an operation (t > 1, s > theta, j out of range).
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace freewalk
