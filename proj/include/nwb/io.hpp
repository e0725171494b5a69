#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace nwb::io {

/// Whole file as bytes. Throws IoError.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a partial file. Creates missing parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);

/// Strict parse of a whole string. Throws FormatError.
double parse_double(std::string_view text);
unsigned long long parse_u64(std::string_view text);

}  // namespace nwb::io
