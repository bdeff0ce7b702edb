#pragma once

#include <stdexcept>
#include <string>

namespace neurocode {

enum class ErrorKind {
  io,
  bad_magic,
  unsupported_format,
  truncated,
  shape_mismatch,
  missing_file,
  non_contiguous,
  invalid_argument,
  non_finite,
  degenerate,
  stage_failed,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the toolkit; `kind()` tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace neurocode
