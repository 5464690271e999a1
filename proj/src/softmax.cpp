#include "ficl/softmax.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ficl {

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    double max_score = kNegInf;
    for (double s : scores) {
        if (std::isnan(s) || s == std::numeric_limits<double>::infinity()) {
            throw std::invalid_argument("softmax: entries must be finite or -inf");
        }
        if (s > max_score) {
            max_score = s;
        }
    }
    if (max_score == kNegInf) {
        throw std::runtime_error("fully masked distribution");
    }
    std::vector<double> out(scores.size());
    double denom = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - max_score);
        denom += out[i];
    }
    for (double& x : out) {
        x /= denom;
    }
    return out;
}

} // namespace ficl
