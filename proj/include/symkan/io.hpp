#pragma once

// Small file helpers: CSV tables, whole-file reads and atomic writes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace symkan {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  // Index of a named column, -1 if absent.
  int column(std::string_view name) const;
};

// Reads a numeric CSV with one header line. Throws LoadError on missing
// files, ragged rows or non-numeric cells.
CsvTable read_csv(const std::filesystem::path& path);

// Formats a double so that it parses back to the same value.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL);

}  // namespace symkan
