#pragma once

#include <stdexcept>
#include <string>

namespace voxseg {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File / format problems. The kind distinguishes the failure classes that
/// callers may want to handle separately.
struct IoError : Error {
  enum class Kind { missing_file, size_mismatch, bad_metadata, write_failure };

  IoError(Kind k, const std::string& msg) : Error(msg), kind(k) {}

  Kind kind;
};

/// A caller violated a documented precondition (bad margins, shape
/// mismatches, invalid parameter combinations).
struct ContractError : Error {
  using Error::Error;
};

}  // namespace voxseg
