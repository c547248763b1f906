#pragma once

#include <stdexcept>
#include <string>

namespace cdanet {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not satisfy an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input values are outside their allowed domain (labels, indices).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset, schema or CSV input.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A function expected to be deterministic returned different values.
class DeterminismError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint could not be read or does not match the model.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdanet
