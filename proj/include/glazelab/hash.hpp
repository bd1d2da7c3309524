#pragma once

#include "glazelab/common.hpp"

#include <filesystem>
#include <span>
#include <string>

namespace glazelab::inline GLAZELAB_ABI {

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace glazelab
