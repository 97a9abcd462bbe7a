#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace reina::detail {

// Lossless decimal form with at least 9 significant digits.
std::string format_double(double value);

std::string json_number_array(std::span<const double> values);
std::string json_int_array(std::span<const int> values);
std::string json_bool_array(const std::vector<bool>& values);
std::string json_string(const std::string& value);

std::vector<std::string> read_lines(const std::filesystem::path& path);
// Writes via a temporary file in the same directory so readers never observe
// a half-written output.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace reina::detail
