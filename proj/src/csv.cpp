#include "snn/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "snn/errors.hpp"

namespace snn::csv {

namespace {
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}
}  // namespace

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file for reading: " + path);
  Table table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      table.header = split_line(line);
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != table.header.size()) {
      std::ostringstream os;
      os << path << ":" << lineno << ": expected " << table.header.size()
         << " fields, got " << fields.size();
      throw IoError(os.str());
    }
    table.rows.push_back(std::move(fields));
  }
  if (lineno == 0) throw IoError("empty file: " + path);
  return table;
}

void write_file(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  auto emit = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  if (!out) throw IoError("write failed: " + path);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(context + ": not a number: '" + s + "'");
  }
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError(context + ": not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace snn::csv
