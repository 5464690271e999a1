#include "ficl/nnops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ficl {

Matrix layernorm_rows(const Matrix& x, std::span<const double> gamma,
                      std::span<const double> beta, LayerNormStats* stats) {
    const int n = x.rows();
    const int d = x.cols();
    if (static_cast<int>(gamma.size()) != d || static_cast<int>(beta.size()) != d) {
        throw std::invalid_argument("layernorm: parameter width mismatch");
    }
    Matrix y(n, d);
    if (stats != nullptr) {
        stats->x_hat = Matrix(n, d);
        stats->inv_std.assign(static_cast<size_t>(n), 0.0);
    }
#pragma omp parallel for schedule(static) if (n > 64)
    for (int i = 0; i < n; ++i) {
        const auto row = x.row(i);
        double mean = 0.0;
        for (double v : row) {
            mean += v;
        }
        mean /= d;
        double var = 0.0;
        for (double v : row) {
            var += (v - mean) * (v - mean);
        }
        var /= d;
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int j = 0; j < d; ++j) {
            const double xh = (row[static_cast<size_t>(j)] - mean) * inv_std;
            y.at(i, j) = gamma[static_cast<size_t>(j)] * xh + beta[static_cast<size_t>(j)];
            if (stats != nullptr) {
                stats->x_hat.at(i, j) = xh;
            }
        }
        if (stats != nullptr) {
            stats->inv_std[static_cast<size_t>(i)] = inv_std;
        }
    }
    return y;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

Matrix gelu_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    const double* in = x.data();
    double* out = y.data();
#pragma omp parallel for schedule(static) if (x.size() > 4096)
    for (long long i = 0; i < static_cast<long long>(x.size()); ++i) {
        out[i] = gelu(in[i]);
    }
    return y;
}

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
    Matrix y = matmul(x, w);
    if (!b.empty()) {
        if (static_cast<int>(b.size()) != y.cols()) {
            throw std::invalid_argument("affine: bias width mismatch");
        }
        for (int i = 0; i < y.rows(); ++i) {
            auto row = y.row(i);
            for (int j = 0; j < y.cols(); ++j) {
                row[static_cast<size_t>(j)] += b[static_cast<size_t>(j)];
            }
        }
    }
    return y;
}

void add_inplace(Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw std::invalid_argument("add_inplace: shape mismatch");
    }
    double* a = x.data();
    const double* b = y.data();
    for (size_t i = 0; i < x.size(); ++i) {
        a[i] += b[i];
    }
}

double log_softmax_at(std::span<const double> logits, int target) {
    double max = logits[0];
    for (double v : logits) {
        max = std::max(max, v);
    }
    double sum = 0.0;
    for (double v : logits) {
        sum += std::exp(v - max);
    }
    return logits[static_cast<size_t>(target)] - max - std::log(sum);
}

} // namespace ficl
