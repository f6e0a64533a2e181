#pragma once

#include <stdexcept>
#include <string>

namespace stageseq {

// Root of every error the library raises. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or configuration shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its documented range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Dataset content is missing, malformed or insufficient.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A backward pass was requested without the forward intermediates it needs.
class StateError : public Error {
 public:
  using Error::Error;
};

// Training diverged. Carries the epoch and step where it happened.
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, int epoch, int step)
      : NumericError(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
        epoch_(epoch),
        step_(step) {}

  int epoch() const noexcept { return epoch_; }
  int step() const noexcept { return step_; }

 private:
  int epoch_;
  int step_;
};

}  // namespace stageseq
