#pragma once

#include <filesystem>
#include <string>

namespace kcomp::detail {

// Writes via a ".tmp" sibling renamed into place after a successful flush,
// so readers never observe a partially written file. Throws IoError.
void write_file_atomically(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace kcomp::detail
