#pragma once

#include <stdexcept>
#include <string>

namespace relab {

/// Malformed input files, schema violations, broken invariants in user data.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or other numeric breakdown during computation.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace relab
