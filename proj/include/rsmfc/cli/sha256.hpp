#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace rsmfc::cli {

/// SHA-256 digest as a lowercase hex string.
std::string sha256_hex(std::span<const unsigned char> data);
std::string sha256_hex(const std::string& data);

/// Hashes a file's bytes; throws std::runtime_error if it cannot be read.
std::string sha256_file(const std::string& path);

} // namespace rsmfc::cli
