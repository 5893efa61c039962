#pragma once

#include <stdexcept>
#include <string>

namespace dfseg {

/// Input or configuration rejected before any work was done (CLI exit code 1).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be read or written.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stored parameter set does not fit the network it is loaded into.
class CheckpointIncompatible : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dfseg
