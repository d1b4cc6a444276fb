#pragma once

#include <stdexcept>
#include <string>

namespace lumina {

/// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up (names the offending axis in the message).
struct DimensionError : Error {
  using Error::Error;
};

/// A convolution geometry that does not produce an integer output size.
struct GeometryError : Error {
  using Error::Error;
};

/// Invalid user-supplied configuration (negative weight, lambda out of range, ...).
struct ConfigError : Error {
  using Error::Error;
};

/// An API contract was violated (non-scalar loss, tensors from different tapes, ...).
struct ContractError : Error {
  using Error::Error;
};

/// A numeric domain violation (perturbation left the valid domain, NaN loss, ...).
struct DomainError : Error {
  using Error::Error;
};

/// Data ingestion failure (unreadable image, no valid pairs, ...).
struct DataError : Error {
  using Error::Error;
};

/// Checkpoint load failure, with the failure class attached.
struct CheckpointError : Error {
  enum class Kind { magic, version, manifest, shape, truncated, io };
  Kind kind;
  CheckpointError(Kind k, const std::string& what) : Error(what), kind(k) {}
};

/// Training aborted (NaN gradient or loss); message names the step/parameter.
struct TrainError : Error {
  using Error::Error;
};

}  // namespace lumina
