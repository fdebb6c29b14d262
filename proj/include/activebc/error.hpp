#pragma once

#include <stdexcept>
#include <string>

namespace activebc {

// Base class for all runtime failures raised by the library. Precondition
// violations on arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN or Inf showed up in a tensor; `op` names the producing operation.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& op)
      : Error("numeric fault in " + op), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagic : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

class Truncated : public FormatError {
 public:
  Truncated(const std::string& what, std::size_t expected, std::size_t actual)
      : FormatError(what + ": expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class LengthMismatch : public FormatError {
 public:
  using FormatError::FormatError;
};

// The scripted demonstrator lost sight of the plant for too long.
class ExpertFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace activebc
