#include "calens/csv.hpp"

#include "calens/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace calens::csv {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\"");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

bool looks_numeric(const std::string& cell) {
    if (cell.empty()) {
        return false;
    }
    char* end = nullptr;
    std::strtod(cell.c_str(), &end);
    return end == cell.c_str() + cell.size();
}

} // namespace

Table read_table(const std::filesystem::path& path, HeaderMode mode) {
    std::ifstream in(path);
    if (!in) {
        throw ArgumentError("cannot open " + path.string());
    }
    Table table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        auto cells = split(line);
        if (first) {
            first = false;
            bool any_numeric = false;
            for (const auto& c : cells) {
                any_numeric = any_numeric || looks_numeric(c);
            }
            if (mode == HeaderMode::Present || (mode == HeaderMode::Detect && !any_numeric)) {
                table.header = std::move(cells);
                continue;
            }
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

double parse_cell(const std::string& cell, std::size_t row, std::size_t col) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw ParseError("malformed numeric cell '" + cell + "' at row " + std::to_string(row) +
                             ", column " + std::to_string(col),
                         row, col);
    }
    return v;
}

Matrix read_matrix(const std::filesystem::path& path, HeaderMode mode) {
    const Table t = read_table(path, mode);
    if (t.rows.empty()) {
        return Matrix(0, 0);
    }
    const std::size_t offset = t.header.empty() ? 1 : 2;
    const std::size_t width = t.rows.front().size();
    Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (t.rows[r].size() != width) {
            throw ParseError("ragged CSV: row " + std::to_string(r + offset) + " has " +
                                 std::to_string(t.rows[r].size()) + " cells, expected " +
                                 std::to_string(width),
                             r + offset, 0);
        }
        for (std::size_t c = 0; c < width; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                parse_cell(t.rows[r][c], r + offset, c + 1);
        }
    }
    return m;
}

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "NA";
    }
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw ArgumentError("cannot write " + path.string());
    }
    auto emit = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) {
                out << ',';
            }
            out << cells[i];
        }
        out << '\n';
    };
    if (!header.empty()) {
        emit(header);
    }
    for (const auto& r : rows) {
        emit(r);
    }
}

void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  const std::vector<std::string>& header) {
    std::vector<std::vector<std::string>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto& row = rows[static_cast<std::size_t>(i)];
        row.reserve(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(format_double(m(i, j)));
        }
    }
    write_table(path, header.empty() ? numbered_header("c", static_cast<std::size_t>(m.cols())) : header,
                rows);
}

void write_int_matrix(const std::filesystem::path& path, const IntMatrix& m,
                      const std::vector<std::string>& header) {
    std::vector<std::vector<std::string>> rows(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto& row = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(std::to_string(m(i, j)));
        }
    }
    write_table(path, header.empty() ? numbered_header("c", static_cast<std::size_t>(m.cols())) : header,
                rows);
}

std::vector<std::string> numbered_header(const std::string& prefix, std::size_t count) {
    std::vector<std::string> h;
    h.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        h.push_back(prefix + std::to_string(i));
    }
    return h;
}

} // namespace calens::csv
