#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uniseg {

// Caller violated a documented precondition.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class LookupError : public ContractError {
 public:
  using ContractError::ContractError;
};

// NaN or Inf produced by a forward operation or found in a gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No template expression singles out the requested instance.
class AmbiguityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class UnsupportedVersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace uniseg
