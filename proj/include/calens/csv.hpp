#pragma once

#include "calens/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace calens::csv {

/// Raw cell table. Rows may be ragged; callers validate shape.
struct Table {
    std::vector<std::string> header;  // empty when the file has no header row
    std::vector<std::vector<std::string>> rows;
};

/// Detect: a first row in which no cell parses as a number is a header.
/// Present: the first row is always a header (e.g. numeric column ids).
enum class HeaderMode { Detect, Present };

/// Splits a CSV file on commas. Throws ArgumentError if the file is missing.
Table read_table(const std::filesystem::path& path, HeaderMode mode = HeaderMode::Detect);

/// Numeric matrix with every row the same width and every value finite.
/// Errors carry 1-based (row, col) positions in the file.
Matrix read_matrix(const std::filesystem::path& path, HeaderMode mode = HeaderMode::Detect);

/// Parses one cell as a finite double, or throws ParseError at (row, col).
double parse_cell(const std::string& cell, std::size_t row, std::size_t col);

/// Shortest round-trip representation of a double.
std::string format_double(double v);

/// Writes header + rows. Cells are written verbatim.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  const std::vector<std::string>& header = {});
void write_int_matrix(const std::filesystem::path& path, const IntMatrix& m,
                      const std::vector<std::string>& header = {});

/// "prefix0,prefix1,..." column names.
std::vector<std::string> numbered_header(const std::string& prefix, std::size_t count);

} // namespace calens::csv
