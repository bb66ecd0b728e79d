#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace divelab {

// Precondition violations are reported as std::invalid_argument. The types
// below cover the remaining failure classes; the CLI maps each one onto a
// stable exit code.

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that violates a domain invariant (empty class, shape mismatch).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary container. offset() is the byte position where decoding failed.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : ValidationError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Training produced a non-finite loss or parameter.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace divelab
