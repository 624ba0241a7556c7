#include "pdakit/io.hpp"

#include <cstdio>
#include <cstdlib>

#include "pdakit/errors.hpp"

namespace pdakit {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& field, const std::string& context) {
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str()) throw IoError("could not parse number '" + field + "' in " + context);
    return v;
}

}  // namespace pdakit
