#pragma once

#include <stdexcept>
#include <string>

namespace spanlab {

// Problems with the run configuration (missing paths, bad option values).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Anything wrong with input data. The CLI maps these to exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class EncodingError : public DataError {
 public:
  EncodingError(const std::string& what, std::size_t byte_offset)
      : DataError(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

// No legal path exists under a transition mask.
class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

class TrainingError : public DataError {
 public:
  TrainingError(const std::string& what, int epoch)
      : DataError(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace spanlab
