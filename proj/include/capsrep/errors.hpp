#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace capsrep {

// Base class for everything thrown on purpose by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/rank mismatches between tensors. Message names both shapes.
struct DimError : Error {
  using Error::Error;
};

// Invalid scalar arguments (negative lr, zero dims, bad axis, ...).
struct ParamError : Error {
  using Error::Error;
};

// NaN/Inf produced or consumed by a numeric kernel.
struct NumericError : Error {
  using Error::Error;
};

// A caller broke a documented precondition (non-simplex rows, non-unit
// quaternion, non-scalar loss, ...).
struct ContractError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration (missing seed, odd split width, ...).
struct ConfigError : Error {
  using Error::Error;
};

// File/stream failures: short reads, bad magic, unwritable paths.
struct IoError : Error {
  using Error::Error;
};

// Batch statistics requested on fewer than two rows.
struct DegenerateBatchError : Error {
  using Error::Error;
};

// Regression target with zero variance: R^2 undefined.
struct DegenerateTargetError : Error {
  using Error::Error;
};

// An exactly-zero denominator reached a routing op with guards disabled.
struct DivisionGuardError : Error {
  using Error::Error;
};

inline std::string shape_str(const std::vector<std::int64_t>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

}  // namespace capsrep
