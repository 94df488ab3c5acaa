#pragma once

#include <string>
#include <vector>

namespace snn::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Strict reader for the plain comma-separated schemas used by this
// project: no quoting, no embedded commas. Trailing \r is stripped so
// CRLF files load. Ragged rows raise IoError with the line number.
Table read_file(const std::string& path);

void write_file(const std::string& path, const Table& table);

// Locale-independent numeric formatting (shortest round-trip form).
std::string format_double(double v);

// Full-consume parse; raises ValidationError with `context` on failure.
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

}  // namespace snn::csv
