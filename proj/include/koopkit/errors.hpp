#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "koopkit/types.hpp"

namespace koopkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Raised by an algorithm step whose Jacobian/Hessian/derivative vanishes.
class SingularityError : public NumericalError {
 public:
  SingularityError(const std::string& what, StateVector state)
      : NumericalError(what), state_(std::move(state)) {}

  const StateVector& state() const noexcept { return state_; }

 private:
  StateVector state_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace koopkit
