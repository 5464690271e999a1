#pragma once

#include <array>
#include <vector>

namespace ficl {

struct PcaResult {
    std::vector<double> component1; // unit norm
    std::vector<double> component2; // unit norm, orthogonal to component1
    std::vector<std::array<double, 2>> projections; // centered coordinates per sample
    double eigenvalue1 = 0.0;
    double eigenvalue2 = 0.0;
};

// Top-2 principal components by deterministic power iteration with deflation
// (1000 iteration cap, 1e-10 convergence tolerance, first-basis-vector start,
// seeded restart on stagnation). Throws "degenerate covariance" when the
// samples carry no variance at all.
PcaResult pca_top2(const std::vector<std::vector<double>>& samples);

} // namespace ficl
