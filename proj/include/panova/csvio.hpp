#pragma once

#include <string>
#include <vector>

namespace panova::csvio {

// Round-trip decimal formatting (17 significant digits).
std::string fmt(double x);
// Companion human-readable form, fixed number of decimals.
std::string fmt_rounded(double x, int decimals);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::string to_string() const;
    void save(const std::string& path) const;
};

Table load(const std::string& path);

// Column values parsed as doubles; throws naming the row on bad cells.
std::vector<double> numeric_column(const Table& t, const std::string& name);
int column_index(const Table& t, const std::string& name);

}  // namespace panova::csvio
