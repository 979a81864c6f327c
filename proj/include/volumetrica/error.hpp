// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace volumetrica {

enum class ErrorCode {
  invalid_argument,
  domain_error,
  shape_out_of_bounds,
  shape_mismatch,
  degenerate_input,
  underdetermined,
  duplicate_abscissa,
  unsupported_syntax,
  truncated,
  size_limit,
  no_valid_images,
  geometry_mismatch,
  malformed,
  numerical_failure,
  separation,
  training_diverged,
  io_error,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::domain_error: return "domain-error";
    case ErrorCode::shape_out_of_bounds: return "shape-out-of-bounds";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::degenerate_input: return "degenerate-input";
    case ErrorCode::underdetermined: return "underdetermined";
    case ErrorCode::duplicate_abscissa: return "duplicate-x";
    case ErrorCode::unsupported_syntax: return "unsupported-syntax";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::size_limit: return "size-limit";
    case ErrorCode::no_valid_images: return "no-valid-images";
    case ErrorCode::geometry_mismatch: return "geometry-mismatch";
    case ErrorCode::malformed: return "malformed";
    case ErrorCode::numerical_failure: return "numerical-failure";
    case ErrorCode::separation: return "separation";
    case ErrorCode::training_diverged: return "training-diverged";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the DICOM parser; carries the byte offset where decoding stopped.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, const std::string& what, std::size_t offset)
      : Error(code, what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace volumetrica
