#pragma once

// Minimal comma-separated reader: no quoting, header row required.

#include <charconv>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "povmap/error.hpp"

namespace povmap {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the file
  std::vector<std::string> fields;
};

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  /// Column index by name; missing columns are a malformed-input error.
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(ErrorKind::malformed_input, path + ": missing column '" + std::string(name) + "'");
  }
};

/// Reads a CSV file, checking every row has as many fields as the header.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::missing_input, "cannot open " + path);
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    require(fields.size() == t.header.size(), ErrorKind::malformed_input,
            path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                " fields, found " + std::to_string(fields.size()));
    t.rows.push_back({lineno, std::move(fields)});
  }
  require(!t.header.empty(), ErrorKind::malformed_input, path + ": empty file");
  return t;
}

template <typename N>
N parse_number(std::string_view s, const std::string& where) {
  N v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  require(ec == std::errc() && ptr == end && !s.empty(), ErrorKind::malformed_input,
          where + ": cannot parse '" + std::string(s) + "' as a number");
  return v;
}

}  // namespace povmap
