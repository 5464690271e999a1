#pragma once

#include <span>
#include <vector>

namespace ficl {

// Stabilized softmax. Entries equal to -infinity act as mask sentinels and
// come out as exactly 0 (exp(-inf) == +0 after max subtraction). Throws
// "fully masked distribution" when every entry is masked.
std::vector<double> softmax(std::span<const double> scores);

} // namespace ficl
