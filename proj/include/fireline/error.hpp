#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fireline {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid architecture, hyperparameter, or op configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes do not agree with what an op or model expects.
class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// API misuse (e.g. backward from a non-scalar).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(int epoch, long step, const std::string& what)
      : NumericError("training diverged at epoch " + std::to_string(epoch) +
                     ", step " + std::to_string(step) + ": " + what),
        epoch_(epoch),
        step_(step) {}
  int epoch() const { return epoch_; }
  long step() const { return step_; }

 private:
  int epoch_;
  long step_;
};

/// Malformed or incomplete on-disk data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Netpbm header or raster could not be parsed.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset),
        reason_(what) {}
  std::size_t offset() const { return offset_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

/// Clip directory is missing frame or mask files.
class InventoryError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class NotACheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TruncatedCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CorruptCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace fireline
