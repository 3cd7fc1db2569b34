#include "docslm/format.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace docslm {
namespace {

// Display width in code points; continuation bytes do not advance the cursor.
std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

std::string with_commas(double value, int decimals) {
  std::string s = fixed(std::abs(value), decimals);
  const auto dot = s.find('.');
  std::string int_part = s.substr(0, dot);
  const std::string frac = dot == std::string::npos ? "" : s.substr(dot);
  std::string grouped;
  const int n = static_cast<int>(int_part.size());
  for (int i = 0; i < n; ++i) {
    grouped.push_back(int_part[static_cast<std::size_t>(i)]);
    const int remaining = n - i - 1;
    if (remaining > 0 && remaining % 3 == 0) grouped.push_back(',');
  }
  const bool negative = value < 0 && std::stod(s) != 0.0;
  return (negative ? "-" : "") + grouped + frac;
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::size_t cols = 0;
  for (const auto& row : rows) cols = std::max(cols, row.size());
  std::vector<std::size_t> width(cols, 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string cell = c < row.size() ? row[c] : "";
      const std::string pad(width[c] - display_width(cell), ' ');
      if (c > 0) line += " | ";
      line += c == 0 ? cell + pad : pad + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace docslm
