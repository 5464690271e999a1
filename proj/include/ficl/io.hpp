#pragma once

#include <string>

namespace ficl {

// write-temp-then-rename so readers never observe a partial file
void atomic_write_file(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

} // namespace ficl
