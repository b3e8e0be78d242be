#pragma once

// Minimal CSV support for the CLI: comma-separated, one header row, decimal
// or scientific numerics, and the empty string as the only missing marker.

#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ptd/errors.hpp"

namespace ptd {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    throw ParseError("column '" + name + "' not found in header");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path + "' is empty");
  table.header = detail::split_csv_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != table.header.size())
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

// Parses a numeric cell; empty means missing. Throws ParseError with the
// offending location otherwise.
inline std::optional<double> parse_cell(const std::string& cell, const std::string& column,
                                        std::size_t row) {
  if (cell.empty()) return std::nullopt;
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end != begin + cell.size())
    throw ParseError("row " + std::to_string(row + 1) + ", column '" + column +
                     "': cannot parse '" + cell + "' as a number");
  return value;
}

}  // namespace ptd
