// Test-only reference implementations, kept independent of the library code
// paths they check.
#pragma once

#include "ficl/matrix.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace oracle {

// plain i-j-k triple loop
inline ficl::Matrix naive_matmul(const ficl::Matrix& a, const ficl::Matrix& b) {
    ficl::Matrix c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols(); ++k) {
                acc += a.at(i, k) * b.at(k, j);
            }
            c.at(i, j) = acc;
        }
    }
    return c;
}

inline std::vector<long double> softmax_ld(std::span<const double> s) {
    long double m = -1e4932L;
    for (double x : s) {
        m = std::max(m, static_cast<long double>(x));
    }
    std::vector<long double> e(s.size());
    long double denom = 0.0L;
    for (size_t i = 0; i < s.size(); ++i) {
        e[i] = expl(static_cast<long double>(s[i]) - m);
        denom += e[i];
    }
    for (auto& x : e) {
        x /= denom;
    }
    return e;
}

// softmax(q K^T) V in long double over the selected rows
inline std::vector<long double> attention_ld(std::span<const double> q, const ficl::Matrix& keys,
                                             const ficl::Matrix& values,
                                             const std::vector<int>& rows) {
    std::vector<double> scores;
    scores.reserve(rows.size());
    for (int r : rows) {
        long double s = 0.0L;
        for (int d = 0; d < keys.cols(); ++d) {
            s += static_cast<long double>(q[static_cast<size_t>(d)]) * keys.at(r, d);
        }
        scores.push_back(static_cast<double>(s));
    }
    const std::vector<long double> w = softmax_ld(scores);
    std::vector<long double> out(static_cast<size_t>(values.cols()), 0.0L);
    for (size_t i = 0; i < rows.size(); ++i) {
        for (int d = 0; d < values.cols(); ++d) {
            out[static_cast<size_t>(d)] += w[i] * values.at(rows[i], d);
        }
    }
    return out;
}

// Jacobi eigensolver for a dense symmetric matrix; returns (eigenvalues,
// eigenvectors as columns), descending by eigenvalue.
inline std::pair<std::vector<double>, ficl::Matrix> jacobi_eigs(ficl::Matrix a) {
    const int n = a.rows();
    ficl::Matrix v(n, n);
    for (int i = 0; i < n; ++i) {
        v.at(i, i) = 1.0;
    }
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                off += a.at(p, q) * a.at(p, q);
            }
        }
        if (off < 1e-24) {
            break;
        }
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(a.at(p, q)) < 1e-30) {
                    continue;
                }
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p);
                    const double akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k);
                    const double aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v.at(k, p);
                    const double vkq = v.at(k, q);
                    v.at(k, p) = c * vkp - s * vkq;
                    v.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        idx[static_cast<size_t>(i)] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return a.at(x, x) > a.at(y, y); });
    std::vector<double> evals;
    ficl::Matrix sorted(n, n);
    for (int j = 0; j < n; ++j) {
        evals.push_back(a.at(idx[static_cast<size_t>(j)], idx[static_cast<size_t>(j)]));
        for (int i = 0; i < n; ++i) {
            sorted.at(i, j) = v.at(i, idx[static_cast<size_t>(j)]);
        }
    }
    return {evals, sorted};
}

} // namespace oracle
