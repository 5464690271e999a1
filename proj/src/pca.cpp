#include "ficl/pca.hpp"

#include "ficl/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ficl {

namespace {

constexpr int kMaxIters = 1000;
constexpr double kTol = 1e-10;

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

void subtract_projection(std::vector<double>& v, const std::vector<double>& onto) {
    double c = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        c += v[i] * onto[i];
    }
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] -= c * onto[i];
    }
}

// Fix the sign so the largest-magnitude coordinate (lowest index on ties) is
// positive; keeps emitted coordinates reproducible.
void canonical_sign(std::vector<double>& v) {
    size_t arg = 0;
    for (size_t i = 1; i < v.size(); ++i) {
        if (std::fabs(v[i]) > std::fabs(v[arg])) {
            arg = i;
        }
    }
    if (v[arg] < 0.0) {
        for (double& x : v) {
            x = -x;
        }
    }
}

std::vector<double> matvec(const std::vector<std::vector<double>>& m, const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < v.size(); ++j) {
            acc += m[i][j] * v[j];
        }
        out[i] = acc;
    }
    return out;
}

// Power iteration on cov, orthogonalized against prev (may be empty).
// Returns {eigenvector, eigenvalue}; eigenvalue 0 means the deflated matrix
// has no remaining variance in the available subspace.
std::pair<std::vector<double>, double> power_iterate(const std::vector<std::vector<double>>& cov,
                                                     const std::vector<double>* prev) {
    const size_t d = cov.size();
    SeededRng rng(0x9e3779b97f4a7c15ULL);
    std::vector<double> v(d, 0.0);
    v[0] = 1.0;
    if (prev != nullptr) {
        subtract_projection(v, *prev);
        double n = norm(v);
        if (n < kTol) {
            // e1 is (numerically) the previous component; restart randomly
            for (double& x : v) {
                x = rng.next_normal();
            }
            subtract_projection(v, *prev);
            n = norm(v);
        }
        for (double& x : v) {
            x /= n;
        }
    }
    double eigenvalue = 0.0;
    for (int it = 0; it < kMaxIters; ++it) {
        std::vector<double> w = matvec(cov, v);
        if (prev != nullptr) {
            subtract_projection(w, *prev);
        }
        const double n = norm(w);
        if (n < kTol) {
            // stagnated: either no variance left or the start was orthogonal
            // to the dominant direction; re-randomize and try again
            bool restarted = false;
            for (int attempt = 0; attempt < 8 && !restarted; ++attempt) {
                for (double& x : v) {
                    x = rng.next_normal();
                }
                if (prev != nullptr) {
                    subtract_projection(v, *prev);
                }
                const double vn = norm(v);
                if (vn > kTol) {
                    for (double& x : v) {
                        x /= vn;
                    }
                    std::vector<double> w2 = matvec(cov, v);
                    if (prev != nullptr) {
                        subtract_projection(w2, *prev);
                    }
                    if (norm(w2) > kTol) {
                        restarted = true;
                    }
                }
            }
            if (!restarted) {
                return {v, 0.0};
            }
            continue;
        }
        std::vector<double> next(d);
        for (size_t i = 0; i < d; ++i) {
            next[i] = w[i] / n;
        }
        double delta = 0.0;
        for (size_t i = 0; i < d; ++i) {
            delta += (next[i] - v[i]) * (next[i] - v[i]);
        }
        eigenvalue = n;
        v = next;
        if (std::sqrt(delta) < kTol) {
            break;
        }
    }
    return {v, eigenvalue};
}

} // namespace

PcaResult pca_top2(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 3) {
        throw std::invalid_argument("pca_top2: need at least 3 samples");
    }
    const size_t d = samples[0].size();
    if (d < 2) {
        throw std::invalid_argument("pca_top2: dimension must be at least 2");
    }
    for (const auto& s : samples) {
        if (s.size() != d) {
            throw std::invalid_argument("pca_top2: samples must have equal length");
        }
    }
    const size_t n = samples.size();
    std::vector<double> mean(d, 0.0);
    for (const auto& s : samples) {
        for (size_t j = 0; j < d; ++j) {
            mean[j] += s[j];
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(n);
    }
    std::vector<std::vector<double>> centered(n, std::vector<double>(d));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) {
            centered[i][j] = samples[i][j] - mean[j];
        }
    }
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t a = 0; a < d; ++a) {
            const double ca = centered[i][a];
            for (size_t b = 0; b < d; ++b) {
                cov[a][b] += ca * centered[i][b];
            }
        }
    }
    double trace = 0.0;
    for (size_t a = 0; a < d; ++a) {
        for (auto& x : cov[a]) {
            x /= static_cast<double>(n - 1);
        }
        trace += cov[a][a];
    }
    if (trace <= 0.0) {
        throw std::runtime_error("degenerate covariance");
    }

    PcaResult res;
    auto [c1, ev1] = power_iterate(cov, nullptr);
    canonical_sign(c1);
    auto [c2, ev2] = power_iterate(cov, &c1);
    if (ev2 == 0.0) {
        // rank-1 data: any unit vector orthogonal to c1 works; projections
        // onto it are 0. Build one deterministically from a basis vector.
        for (size_t j = 0; j < d; ++j) {
            std::vector<double> e(d, 0.0);
            e[j] = 1.0;
            subtract_projection(e, c1);
            const double nn = norm(e);
            if (nn > 1e-6) {
                for (double& x : e) {
                    x /= nn;
                }
                c2 = e;
                break;
            }
        }
    }
    canonical_sign(c2);
    res.component1 = std::move(c1);
    res.component2 = std::move(c2);
    res.eigenvalue1 = ev1;
    res.eigenvalue2 = ev2;
    res.projections.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double p1 = 0.0;
        double p2 = 0.0;
        for (size_t j = 0; j < d; ++j) {
            p1 += centered[i][j] * res.component1[j];
            p2 += centered[i][j] * res.component2[j];
        }
        res.projections[i] = {p1, p2};
    }
    return res;
}

} // namespace ficl
