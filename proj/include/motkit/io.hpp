#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace motkit::io {

// Throws std::runtime_error when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::string sha256_hex(std::string_view data);

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);

}  // namespace motkit::io
