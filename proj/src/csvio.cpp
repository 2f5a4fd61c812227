#include "panova/csvio.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace panova::csvio {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt_rounded(double x, int decimals) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, x);
    return buf;
}

namespace {

bool needs_quotes(const std::string& cell) {
    return cell.find_first_of(",\"\n") != std::string::npos;
}

std::string quote(const std::string& cell) {
    if (!needs_quotes(cell)) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> split_line(const std::string& line, int line_no) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted)
        throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": unterminated quote");
    cells.push_back(cur);
    return cells;
}

}  // namespace

void Table::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size())
        throw std::invalid_argument("CSV row width " + std::to_string(row.size()) +
                                    " != header width " + std::to_string(columns.size()));
    rows.push_back(std::move(row));
}

std::string Table::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out += ',';
        out += quote(columns[i]);
    }
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += quote(row[i]);
        }
        out += '\n';
    }
    return out;
}

void Table::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write CSV file: " + path);
    f << to_string();
}

Table load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open CSV file: " + path);
    Table t;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && line_no > 1) continue;
        auto cells = split_line(line, line_no);
        if (line_no == 1)
            t.columns = std::move(cells);
        else {
            if (cells.size() != t.columns.size())
                throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": expected " +
                                            std::to_string(t.columns.size()) + " fields, got " +
                                            std::to_string(cells.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.columns.empty()) throw std::invalid_argument("CSV file has no header: " + path);
    return t;
}

int column_index(const Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        if (t.columns[i] == name) return static_cast<int>(i);
    throw std::invalid_argument("CSV column not found: " + name);
}

std::vector<double> numeric_column(const Table& t, const std::string& name) {
    const auto idx = static_cast<std::size_t>(column_index(t, name));
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string& cell = t.rows[r][idx];
        if (cell.empty())
            throw std::invalid_argument("CSV column '" + name + "' row " + std::to_string(r + 2) +
                                        ": missing value");
        char* end = nullptr;
        const double v = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str() || *end != '\0')
            throw std::invalid_argument("CSV column '" + name + "' row " + std::to_string(r + 2) +
                                        ": not a number: '" + cell + "'");
        out.push_back(v);
    }
    return out;
}

}  // namespace panova::csvio
