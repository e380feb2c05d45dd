#pragma once

#include <string>

namespace redf {

// SHA-1 hex digest of a byte string / file (content hashing for run metadata).
std::string sha1_hex(const std::string& bytes);
std::string sha1_file_hex(const std::string& path);  // throws DataError when unreadable

}  // namespace redf
