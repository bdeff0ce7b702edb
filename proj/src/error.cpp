#include "neurocode/error.hpp"

namespace neurocode {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::bad_magic: return "bad_magic";
    case ErrorKind::unsupported_format: return "unsupported_format";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::missing_file: return "missing_file";
    case ErrorKind::non_contiguous: return "non_contiguous";
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::stage_failed: return "stage_failed";
  }
  return "unknown";
}

}  // namespace neurocode
