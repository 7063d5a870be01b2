// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace owlfed {

/// Invalid argument value (even window size, empty batch, beta = 1, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shape mismatch between tensors or between a tensor and a config.
class DimensionError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Every key position of an attention window is masked.
class DegenerateMaskError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (ordering, spacing, bad cells).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file does not match the configured column schema.
class SchemaError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Operation invoked on an object in the wrong state (e.g. reused tape).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad experiment configuration (unknown key, wrong type, missing block).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace owlfed
