#pragma once

#include <stdexcept>
#include <string>

namespace knw {

// A documented precondition was broken by the caller.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// A computation produced non-finite values or failed to converge.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// On-disk data is malformed, corrupted, or does not match expectations.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A stored model does not match the architecture the caller asked for.
struct ArchitectureMismatch : FormatError {
  using FormatError::FormatError;
};

// The filesystem refused an operation (missing file, unwritable path, ...).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Process exit codes used by the command-line driver.
enum ExitCode : int {
  exit_ok = 0,
  exit_config = 2,
  exit_numerical = 3,
  exit_io = 4,
};

}  // namespace knw
