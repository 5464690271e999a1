#pragma once

#include <string>
#include <vector>

namespace ficl {

// shortest round-trip formatting; reports stay byte-identical across reruns
std::string fmt_double(double v);
// compact form for method tags ("0.1", not "0.10000000000000001")
std::string fmt_double_short(double v);

constexpr int kReportSchemaVersion = 1;

class CsvWriter {
public:
    void header(const std::vector<std::string>& cols);
    void row(const std::vector<std::string>& cells);
    void comment(const std::string& line); // "# ..." prefix
    const std::string& str() const { return out_; }

private:
    std::string out_;
    size_t width_ = 0;
};

} // namespace ficl
