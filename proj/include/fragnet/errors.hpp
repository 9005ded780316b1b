#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fragnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (bad shape, bad label, bad config).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed bytes on disk. Subclasses distinguish the checkpoint failure modes.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public FormatError {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : FormatError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace fragnet
