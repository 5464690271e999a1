#include "ficl/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ficl {

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) {
        throw std::invalid_argument("Matrix: negative shape");
    }
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<size_t>(rows) * cols) {
        throw std::invalid_argument("Matrix: data length does not match shape");
    }
}

namespace {

// i-k-j nest: the k loop is hoisted so the inner j loop vectorizes, while each
// (i, j) element still accumulates in ascending-k order. The serial and
// parallel kernels therefore agree bit-for-bit.
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c, int i_begin, int i_end) {
    const int n = a.cols();
    const int m = b.cols();
    for (int i = i_begin; i < i_end; ++i) {
        double* crow = c.data() + static_cast<size_t>(i) * m;
        const double* arow = a.data() + static_cast<size_t>(i) * n;
        for (int k = 0; k < n; ++k) {
            const double aik = arow[k];
            const double* brow = b.data() + static_cast<size_t>(k) * m;
            for (int j = 0; j < m; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
}

void require_compatible(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " * " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_compatible(a, b);
    Matrix c(a.rows(), b.cols());
    const long long work = static_cast<long long>(a.rows()) * a.cols() * b.cols();
#pragma omp parallel for schedule(static) if (work > 1 << 16)
    for (int i = 0; i < a.rows(); ++i) {
        matmul_rows(a, b, c, i, i + 1);
    }
    check_finite(c, "matmul");
    return c;
}

Matrix matmul_serial(const Matrix& a, const Matrix& b) {
    require_compatible(a, b);
    Matrix c(a.rows(), b.cols());
    matmul_rows(a, b, c, 0, a.rows());
    check_finite(c, "matmul_serial");
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            t.at(j, i) = m.at(i, j);
        }
    }
    return t;
}

void check_finite(const Matrix& m, const char* what) {
    check_finite(std::span<const double>(m.data(), m.size()), what);
}

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw std::runtime_error(std::string(what) + ": non-finite element");
        }
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

} // namespace ficl
