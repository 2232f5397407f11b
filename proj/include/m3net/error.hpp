#pragma once

#include <stdexcept>
#include <string>

namespace m3net {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was produced, or a finite-difference evaluation failed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or geometry.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated call contract (empty context list, fully masked attention row, tape misuse).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or payload.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or dataset layout problem.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace m3net
