#pragma once

// Minimal CSV emission/parsing with exact round-trip of doubles.
// All run artifacts go through this writer so that determinism checks can
// compare output files byte for byte.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikegrid {

/// Formats with 17 significant digits: parses back to the identical double.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    }

    void header(const std::vector<std::string>& names) { raw_row(names); }

    void field(double x) { fields_.push_back(format_double(x)); }
    void field(std::uint64_t x) { fields_.push_back(std::to_string(x)); }
    void field(std::int64_t x) { fields_.push_back(std::to_string(x)); }
    void field(int x) { fields_.push_back(std::to_string(x)); }
    void field(const std::string& s) { fields_.push_back(s); }

    void end_row() {
        raw_row(fields_);
        fields_.clear();
    }

    void raw_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::vector<std::string> fields_;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::ptrdiff_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<std::ptrdiff_t>(i);
        throw std::runtime_error("csv column not found: " + name);
    }

    double value(std::size_t row, std::ptrdiff_t col) const {
        return std::stod(rows[row][static_cast<std::size_t>(col)]);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) fields.push_back(cell);
        if (!ss && line.back() == ',') fields.emplace_back();
        if (first) {
            table.columns = std::move(fields);
            first = false;
        } else {
            table.rows.push_back(std::move(fields));
        }
    }
    return table;
}

}  // namespace spikegrid
