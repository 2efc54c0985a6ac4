#pragma once

#include <stdexcept>
#include <string>

namespace rcl {

/// Failure categories. Each maps onto one process exit code in the CLI.
enum class ErrorKind {
  Config,      // invalid configuration or precondition (exit 2)
  Parse,       // malformed input data (exit 3)
  Shape,       // dimension mismatch between operands
  LookupMiss,  // precomputed embedding table has no entry for a text
  Unlabeled,   // teacher text could not be mapped to a class
  InvalidRow,  // pseudo-label row has missing or out-of-range entries
  Bounds,      // class index outside 0..C-1
  Undefined,   // similarity of an all-zero vector
  Stage,       // a curriculum stage could not run (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return 2;
    case ErrorKind::Stage:
      return 4;
    default:
      return 3;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace rcl
