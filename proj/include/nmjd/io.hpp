// SPDX-License-Identifier: Apache-2.0
//
// Small text helpers shared by the file formats.
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace nmjd::io {

/// Shortest-round-trip-safe text form of a double ("%.17g").
std::string format_double(double v);

/// Splits one CSV line on commas. Quoted fields are not supported.
std::vector<std::string> split_csv_line(std::string_view line);

std::string trim(std::string_view s);

/// Parses a double, throwing DataError with `context` on failure.
double parse_double(std::string_view s, std::string_view context);

/// Writes `j` as indented JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// FNV-1a 64-bit hash of a file's bytes, rendered as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);
std::string bytes_hash(std::string_view bytes);

}  // namespace nmjd::io
