#pragma once

#include <stdexcept>
#include <string>

namespace pcaps {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or configuration shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf detected by an explicit check.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// A violated precondition on an argument value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Unreadable, malformed, or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Checkpoint failures, one type per cause.
class CheckpointMagicError : public IoError {
 public:
  using IoError::IoError;
};

class CheckpointVersionError : public IoError {
 public:
  using IoError::IoError;
};

class CheckpointTruncatedError : public IoError {
 public:
  using IoError::IoError;
};

class CheckpointShapeError : public IoError {
 public:
  using IoError::IoError;
};

class CheckpointFormatError : public IoError {
 public:
  using IoError::IoError;
};

// A capsule selection that came out empty.
class EmptySelectionError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace pcaps
