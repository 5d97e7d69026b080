#pragma once

#include <string>

namespace feast {

// Hex SHA-256 digest of a byte string / of a file's contents. Used to pin the
// exact input data in run metadata and checkpoints.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace feast
