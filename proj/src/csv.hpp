#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridclear::csv {

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row

  // Column position or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

// RFC-4180-ish: comma separated, optional double quotes, header row required.
Table parse(std::string_view text, std::string name);

// Quotes a field when needed.
std::string escape(std::string_view field);

// Shortest representation that round-trips through strtod.
std::string format_number(double v);

}  // namespace gridclear::csv
