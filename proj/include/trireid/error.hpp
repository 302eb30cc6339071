#pragma once

#include <stdexcept>
#include <string>

namespace trireid {

// Shape/dimension mismatch between tensors.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument value (bad k, label out of range, degenerate input, ...).
struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncated payload, ...).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failure, carries the offending path in the message.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Computation produced a non-finite value (diverged loss, failed gradient
// check); distinct from the others so callers can map it to its own exit code.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trireid
