#pragma once

#include <stdexcept>
#include <string>

namespace nri {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimension mismatch; message names the offending shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Violated precondition of an operation contract.
struct ContractError : Error {
  using Error::Error;
};

// Malformed file content; carries the byte offset where parsing failed.
struct FormatError : Error {
  FormatError(const std::string& msg, std::uint64_t offset)
      : Error(msg + " (at byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::uint64_t byte_offset;
};

// Adaptive integrator could not proceed; reports the time reached.
struct IntegrationError : Error {
  IntegrationError(const std::string& msg, double t)
      : Error(msg + " (time reached: " + std::to_string(t) + ")"),
        time_reached(t) {}
  double time_reached;
};

}  // namespace nri
