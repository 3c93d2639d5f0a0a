#pragma once

#include "rh/linalg.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace rh {

// Plain-text matrix dump: a "rows cols" header line, then one line per row,
// values separated by single spaces in shortest round-trip form, so a dump
// reloads bit for bit.

void write_matrix(std::ostream& os, const Mat& M);
[[nodiscard]] Mat read_matrix(std::istream& is);

void save_matrix(const std::filesystem::path& path, const Mat& M);
[[nodiscard]] Mat load_matrix(const std::filesystem::path& path);

/// Shortest decimal form of a double that parses back to the same bits.
[[nodiscard]] std::string format_double(double v);

/// Write `content` to `path` via a sibling temporary and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

[[nodiscard]] std::string read_file(const std::filesystem::path& path);

}  // namespace rh
