#pragma once

#include <string>
#include <vector>

namespace pdakit {

// Decimal text with 17 significant digits; round-trips IEEE doubles exactly.
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& field, const std::string& context);

}  // namespace pdakit
