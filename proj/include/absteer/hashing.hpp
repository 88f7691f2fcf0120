#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace absteer {

// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

// Hash of a regular file, or of a directory (sorted relative paths and
// their contents) so that store/plan directories hash stably.
std::string sha256_path(const std::filesystem::path& path);

}  // namespace absteer
