#pragma once

#include <stdexcept>
#include <string>

namespace mono {

// Error taxonomy mirrors the CLI exit codes:
//   ValidationError (and subclasses) -> 1, TrainingError -> 2, IoError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, config values, or tensor shapes.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Shape/dimension mismatch; message names the offending axis.
class ShapeError : public ValidationError {
 public:
  explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

// Structural misuse of a network (e.g. absorbing batchnorm twice).
class StructureError : public ValidationError {
 public:
  explicit StructureError(const std::string& msg) : ValidationError(msg) {}
};

// Corrupt or mismatched serialized artifacts (checkpoints).
class FormatError : public ValidationError {
 public:
  explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// Training diverged (NaN loss or gradients).
class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error(msg) {}
};

// File system / decode failures; message carries the path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace mono
