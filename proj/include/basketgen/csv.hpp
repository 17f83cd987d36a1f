#pragma once

// Small RFC-4180-style CSV reader/writer (quoted fields, embedded commas,
// doubled quotes, quoted newlines).

#include <sstream>
#include <string>
#include <vector>

#include "basketgen/fsio.hpp"
#include "basketgen/tensor.hpp"

namespace basketgen {

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          any = false;
        }
        break;
      default:
        field += ch;
        any = true;
    }
  }
  if (any || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text(path));
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  out += '\n';
  return out;
}

// Canonical numeric formatting for CSV output: round-trips doubles exactly.
inline std::string num_str(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline double parse_num(const std::string& s, const std::string& what, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    double x = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw Error("bad numeric value '" + s + "' for " + what + " at row " +
                std::to_string(line_no));
  }
}

inline long parse_int(const std::string& s, const std::string& what, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    long x = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    throw Error("bad integer value '" + s + "' for " + what + " at row " +
                std::to_string(line_no));
  }
}

}  // namespace basketgen
