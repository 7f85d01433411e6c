#pragma once

#include <stdexcept>
#include <string>

namespace adenet {

/// Base class for every error raised by the library. The category decides
/// the CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument contract violated by the caller (usage error).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Tensor extents that do not fit the operation.
class ShapeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Bad input data: malformed manifest, missing image, out-of-bounds bbox.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values detected during training or inference.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint decoding failure. `kind` distinguishes the failure mode.
class CheckpointError : public DataError {
 public:
  enum class Kind { kIo, kBadMagic, kUnsupportedVersion, kChecksumMismatch, kTruncated, kMalformed };

  CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace adenet
