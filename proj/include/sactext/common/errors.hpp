#pragma once

#include <stdexcept>
#include <string>

namespace sactext {

/// Raised for malformed or infeasible configuration (bad keys, infeasible goals, empty goal sets).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidActionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Non-finite values showed up during training; the message carries the diagnostic.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sactext
