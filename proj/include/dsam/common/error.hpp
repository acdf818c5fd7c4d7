#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dsam {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, hyperparameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (bad lengths, out-of-range inputs).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in the wrong state (backward without forward, double HU conversion).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text input. Carries the byte offset of the problem.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsam
