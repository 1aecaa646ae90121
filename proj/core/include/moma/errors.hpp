#pragma once

#include <stdexcept>
#include <string>

namespace moma {

// Base class for every error thrown by the engine.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor extents do not line up for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Bad value supplied by the caller (out-of-range label, zero-norm row, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: bad config file, hyperparameter out of range,
// unknown key, incompatible dimensions at construction time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API contract was violated (non-scalar loss, reused tape, missing grad).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operation requires state that is not there yet (empty queue,
// uninitialized teacher).
class StateError : public Error {
 public:
  using Error::Error;
};

// A file is not a valid checkpoint/artifact (bad magic, truncation).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A well-formed file does not match the expected schema (missing tensor,
// shape mismatch against the config).
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace moma
