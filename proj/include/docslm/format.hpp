#pragma once

#include <string>
#include <vector>

namespace docslm {

// 1234567.891 with 2 decimals -> "1,234,567.89".
std::string with_commas(double value, int decimals);

std::string fixed(double value, int decimals);

// Renders rows as a pipe-separated table. The first row is the header; columns
// after the first are right-aligned.
std::string render_table(const std::vector<std::vector<std::string>>& rows);

}  // namespace docslm
