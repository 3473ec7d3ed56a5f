#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dbart::io {

// Shortest round-trip decimal representation; byte-stable across runs.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name, or -1.
  int column(std::string_view name) const;
};

// Reads a comma-separated file with a header row. Double-quoted fields may
// contain commas; surrounding whitespace is trimmed.
CsvTable read_csv(const std::filesystem::path& path);

// Strict numeric parse: the whole (trimmed) field must be a finite number.
bool parse_double(std::string_view text, double& out);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

// Flat key=value text with optional [section] headers. Keys inside a section
// are returned as "section.key". '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

}  // namespace dbart::io
