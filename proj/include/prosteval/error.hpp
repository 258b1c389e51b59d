#pragma once

#include <stdexcept>
#include <string>

namespace prosteval {

/// Failure category. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  config = 2,      // bad arguments, invalid configuration, precondition violations
  data = 3,        // missing/corrupt files, grid mismatches, invalid voxel values
  degenerate = 4,  // statistic undefined for the given input
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace prosteval
