#pragma once

#include <span>
#include <vector>

namespace ficl {

// Dense row-major double matrix. Kernels on it use fixed loop nests so
// results are bit-stable across runs and across serial/parallel execution.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols); // zero-filled
    Matrix(int rows, int cols, std::vector<double> data);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
    std::span<const double> row(int r) const { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    size_t size() const { return data_.size(); }

    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool operator==(const Matrix& other) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B, OpenMP over output rows; per-element accumulation order is the
// plain ascending-k chain, identical to matmul_serial.
Matrix matmul(const Matrix& a, const Matrix& b);

// Reference kernel: same loop nest, no threading. Kept for tests and for the
// kernel benchmark.
Matrix matmul_serial(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// throws if any element is NaN or infinite
void check_finite(const Matrix& m, const char* what);
void check_finite(std::span<const double> v, const char* what);

double dot(std::span<const double> a, std::span<const double> b);

} // namespace ficl
