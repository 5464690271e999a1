#include "ficl/report.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ficl {

std::string fmt_double(double v) {
    if (std::isnan(v)) {
        return "";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_double_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void CsvWriter::header(const std::vector<std::string>& cols) {
    width_ = cols.size();
    row(cols);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (width_ != 0 && cells.size() != width_) {
        throw std::invalid_argument("csv: row width does not match header");
    }
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) {
            out_.push_back(',');
        }
        out_.append(cells[i]);
    }
    out_.push_back('\n');
}

void CsvWriter::comment(const std::string& line) {
    out_.append("# ");
    out_.append(line);
    out_.push_back('\n');
}

} // namespace ficl
