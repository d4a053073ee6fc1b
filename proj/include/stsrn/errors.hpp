#pragma once

#include <stdexcept>
#include <string>

namespace stsrn {

// Operand shapes do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A value is outside the accepted domain of an operation.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Model or run configuration is inconsistent.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dataset files are missing or unreadable.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation protocol violated (missing gallery identity, empty store).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged or the split leaked.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint / array file could not be read back.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A forward op produced NaN or Inf from its inputs.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stsrn
