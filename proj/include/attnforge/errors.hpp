#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace attnforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (wrong arity, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the gradient tape: detached loss, consumed tape, mixed tapes.
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters or configuration files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid data handed to a model (token ids, sequence lengths).
class InputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// A training run diverged.
class RunError : public Error {
 public:
  RunError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace attnforge
