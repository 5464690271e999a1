#pragma once

#include "ficl/matrix.hpp"

#include <vector>

namespace ficl {

constexpr double kLayerNormEps = 1e-5;

// y = g * (x - mean) / sqrt(var + eps) + b, per row. When stats is non-null
// the normalized rows x_hat and 1/sqrt(var+eps) are stored for backprop.
struct LayerNormStats {
    Matrix x_hat;                // n x d
    std::vector<double> inv_std; // n
};
Matrix layernorm_rows(const Matrix& x, std::span<const double> gamma,
                      std::span<const double> beta, LayerNormStats* stats = nullptr);

double gelu(double x);
double gelu_grad(double x);
Matrix gelu_rows(const Matrix& x);

// y = x * w + b (b broadcast over rows)
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b);

void add_inplace(Matrix& x, const Matrix& y);

// log softmax of one row evaluated at index `target`
double log_softmax_at(std::span<const double> logits, int target);

} // namespace ficl
