#pragma once

#include <stdexcept>
#include <string>

namespace redf {

// Maps to CLI exit code 1 (bad flags / bad config keys).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

// Maps to CLI exit code 2 (missing/malformed inputs, too-short series, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

// Maps to CLI exit code 3 (non-finite loss or other numerical breakdown).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace redf
