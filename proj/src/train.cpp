#include "ficl/train.hpp"

#include "ficl/nnops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ficl {

namespace {

struct LayerCache {
    Matrix a; // LN1 output
    LayerNormStats ln1;
    Matrix q, k, v;
    std::vector<Matrix> attw; // per head, n x n, row = target, col = source
    Matrix o;                 // attention output before W_o
    Matrix b;                 // LN2 output
    LayerNormStats ln2;
    Matrix z1; // pre-GELU
    Matrix f;  // post-GELU
};

// acc += a^T * b
void accumulate_atb(const Matrix& a, const Matrix& b, Matrix& acc) {
    const int n = a.rows();
    const int da = a.cols();
    const int db = b.cols();
#pragma omp parallel for schedule(static) if (static_cast<long long>(da) * db * n > 1 << 16)
    for (int i = 0; i < da; ++i) {
        double* arow = acc.data() + static_cast<size_t>(i) * db;
        for (int t = 0; t < n; ++t) {
            const double ati = a.at(t, i);
            const double* brow = b.data() + static_cast<size_t>(t) * db;
            for (int j = 0; j < db; ++j) {
                arow[j] += ati * brow[j];
            }
        }
    }
}

// out = a * w^T
Matrix matmul_abt(const Matrix& a, const Matrix& w) {
    Matrix out(a.rows(), w.rows());
#pragma omp parallel for schedule(static) if (static_cast<long long>(a.rows()) * a.cols() * w.rows() > 1 << 16)
    for (int t = 0; t < a.rows(); ++t) {
        for (int i = 0; i < w.rows(); ++i) {
            double acc = 0.0;
            const double* arow = a.data() + static_cast<size_t>(t) * a.cols();
            const double* wrow = w.data() + static_cast<size_t>(i) * w.cols();
            for (int j = 0; j < a.cols(); ++j) {
                acc += arow[j] * wrow[j];
            }
            out.at(t, i) = acc;
        }
    }
    return out;
}

void accumulate_colsum(const Matrix& m, std::vector<double>& acc) {
    for (int t = 0; t < m.rows(); ++t) {
        const auto row = m.row(t);
        for (int j = 0; j < m.cols(); ++j) {
            acc[static_cast<size_t>(j)] += row[static_cast<size_t>(j)];
        }
    }
}

Matrix layernorm_backward(const Matrix& dy, const LayerNormStats& st,
                          std::span<const double> gamma, std::vector<double>& dgamma,
                          std::vector<double>& dbeta) {
    const int n = dy.rows();
    const int d = dy.cols();
    Matrix dx(n, d);
    for (int t = 0; t < n; ++t) {
        const auto dyr = dy.row(t);
        const auto xh = st.x_hat.row(t);
        double mean_g = 0.0;
        double mean_gx = 0.0;
        for (int j = 0; j < d; ++j) {
            const double g = gamma[static_cast<size_t>(j)] * dyr[static_cast<size_t>(j)];
            mean_g += g;
            mean_gx += g * xh[static_cast<size_t>(j)];
            dgamma[static_cast<size_t>(j)] += dyr[static_cast<size_t>(j)] * xh[static_cast<size_t>(j)];
            dbeta[static_cast<size_t>(j)] += dyr[static_cast<size_t>(j)];
        }
        mean_g /= d;
        mean_gx /= d;
        const double inv_std = st.inv_std[static_cast<size_t>(t)];
        for (int j = 0; j < d; ++j) {
            const double g = gamma[static_cast<size_t>(j)] * dyr[static_cast<size_t>(j)];
            dx.at(t, j) = inv_std * (g - mean_g - xh[static_cast<size_t>(j)] * mean_gx);
        }
    }
    return dx;
}

// causal multi-head attention forward on train path; fills cache.attw/o
void attention_forward(const ModelConfig& mc, LayerCache& c) {
    const int n = c.q.rows();
    const int H = mc.n_heads;
    const int dh = mc.d_head();
    c.attw.assign(static_cast<size_t>(H), Matrix(n, n));
    c.o = Matrix(n, mc.d_model);
#pragma omp parallel for collapse(2) schedule(static)
    for (int h = 0; h < H; ++h) {
        for (int t = 0; t < n; ++t) {
            const double* qt = c.q.data() + static_cast<size_t>(t) * mc.d_model + h * dh;
            Matrix& w = c.attw[static_cast<size_t>(h)];
            double max_s = -1e300;
            for (int r = 0; r <= t; ++r) {
                const double* kr = c.k.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                double s = 0.0;
                for (int j = 0; j < dh; ++j) {
                    s += qt[j] * kr[j];
                }
                w.at(t, r) = s;
                max_s = std::max(max_s, s);
            }
            double denom = 0.0;
            for (int r = 0; r <= t; ++r) {
                const double e = std::exp(w.at(t, r) - max_s);
                w.at(t, r) = e;
                denom += e;
            }
            double* orow = c.o.data() + static_cast<size_t>(t) * mc.d_model + h * dh;
            for (int j = 0; j < dh; ++j) {
                orow[j] = 0.0;
            }
            for (int r = 0; r <= t; ++r) {
                const double wt = w.at(t, r) / denom;
                w.at(t, r) = wt;
                const double* vr = c.v.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                for (int j = 0; j < dh; ++j) {
                    orow[j] += wt * vr[j];
                }
            }
        }
    }
}

// given d(o), produce dq/dk/dv; heads run in parallel, targets sequentially
// inside a head so the dk/dv accumulation order stays fixed
void attention_backward(const ModelConfig& mc, const LayerCache& c, const Matrix& do_,
                        Matrix& dq, Matrix& dk, Matrix& dv) {
    const int n = c.q.rows();
    const int H = mc.n_heads;
    const int dh = mc.d_head();
#pragma omp parallel for schedule(static)
    for (int h = 0; h < H; ++h) {
        const Matrix& w = c.attw[static_cast<size_t>(h)];
        for (int t = 0; t < n; ++t) {
            const double* dot_ = do_.data() + static_cast<size_t>(t) * mc.d_model + h * dh;
            const double* qt = c.q.data() + static_cast<size_t>(t) * mc.d_model + h * dh;
            double* dqt = dq.data() + static_cast<size_t>(t) * mc.d_model + h * dh;
            double sum_wd = 0.0;
            for (int r = 0; r <= t; ++r) {
                const double* vr = c.v.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                double dwr = 0.0;
                for (int j = 0; j < dh; ++j) {
                    dwr += dot_[j] * vr[j];
                }
                sum_wd += w.at(t, r) * dwr;
            }
            for (int r = 0; r <= t; ++r) {
                const double* vr = c.v.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                const double* kr = c.k.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                double* dkr = dk.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                double* dvr = dv.data() + static_cast<size_t>(r) * mc.d_model + h * dh;
                double dwr = 0.0;
                for (int j = 0; j < dh; ++j) {
                    dwr += dot_[j] * vr[j];
                }
                const double wt = w.at(t, r);
                const double ds = wt * (dwr - sum_wd);
                for (int j = 0; j < dh; ++j) {
                    dqt[j] += ds * kr[j];
                    dkr[j] += ds * qt[j];
                    dvr[j] += wt * dot_[j];
                }
            }
        }
    }
}

} // namespace

double loss_and_grad(const ModelWeights& w, const PromptLayout& layout, ModelWeights& grad) {
    const ModelConfig& mc = w.cfg;
    const int n = layout.size();
    if (n < 2) {
        throw std::invalid_argument("loss_and_grad: layout needs at least 2 tokens");
    }
    const int d = mc.d_model;
    const int L = mc.n_layers;

    Matrix x(n, d);
    for (int t = 0; t < n; ++t) {
        const int tok = layout.tokens[static_cast<size_t>(t)].id;
        const int pos = layout.positions[static_cast<size_t>(t)];
        if (pos >= mc.max_positions) {
            throw std::invalid_argument("loss_and_grad: position overflow");
        }
        const auto te = w.tok_emb.row(tok);
        const auto pe = w.pos_emb.row(pos);
        auto out = x.row(t);
        for (int j = 0; j < d; ++j) {
            out[static_cast<size_t>(j)] = te[static_cast<size_t>(j)] + pe[static_cast<size_t>(j)];
        }
    }

    std::vector<LayerCache> caches(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
        const LayerWeights& lw = w.layers[static_cast<size_t>(l)];
        LayerCache& c = caches[static_cast<size_t>(l)];
        c.a = layernorm_rows(x, lw.ln1_g, lw.ln1_b, &c.ln1);
        c.q = matmul(c.a, lw.wq);
        c.k = matmul(c.a, lw.wk);
        c.v = matmul(c.a, lw.wv);
        attention_forward(mc, c);
        add_inplace(x, matmul(c.o, lw.wo));
        c.b = layernorm_rows(x, lw.ln2_g, lw.ln2_b, &c.ln2);
        c.z1 = affine(c.b, lw.w1, lw.b1);
        c.f = gelu_rows(c.z1);
        add_inplace(x, affine(c.f, lw.w2, lw.b2));
    }
    LayerNormStats lnf;
    const Matrix cf = layernorm_rows(x, w.lnf_g, w.lnf_b, &lnf);
    const Matrix logits = matmul(cf, w.unembed);

    // softmax + CE over positions predicting tokens 1..n-1
    const int count = n - 1;
    Matrix dlogits(n, mc.vocab_size);
    double loss = 0.0;
    for (int t = 0; t < count; ++t) {
        const auto row = logits.row(t);
        const int target = layout.tokens[static_cast<size_t>(t + 1)].id;
        double max_v = row[0];
        for (double v : row) {
            max_v = std::max(max_v, v);
        }
        double denom = 0.0;
        for (int j = 0; j < mc.vocab_size; ++j) {
            denom += std::exp(row[static_cast<size_t>(j)] - max_v);
        }
        loss -= row[static_cast<size_t>(target)] - max_v - std::log(denom);
        for (int j = 0; j < mc.vocab_size; ++j) {
            const double p = std::exp(row[static_cast<size_t>(j)] - max_v) / denom;
            dlogits.at(t, j) = (p - (j == target ? 1.0 : 0.0)) / count;
        }
    }
    loss /= count;

    accumulate_atb(cf, dlogits, grad.unembed);
    Matrix dx = matmul_abt(dlogits, transpose(w.unembed));
    dx = layernorm_backward(dx, lnf, w.lnf_g, grad.lnf_g, grad.lnf_b);

    for (int l = L - 1; l >= 0; --l) {
        const LayerWeights& lw = w.layers[static_cast<size_t>(l)];
        LayerWeights& gw = grad.layers[static_cast<size_t>(l)];
        LayerCache& c = caches[static_cast<size_t>(l)];

        // FFN
        accumulate_atb(c.f, dx, gw.w2);
        accumulate_colsum(dx, gw.b2);
        Matrix df = matmul_abt(dx, transpose(lw.w2));
        Matrix dz1(df.rows(), df.cols());
        for (size_t i = 0; i < df.size(); ++i) {
            dz1.data()[i] = df.data()[i] * gelu_grad(c.z1.data()[i]);
        }
        accumulate_atb(c.b, dz1, gw.w1);
        accumulate_colsum(dz1, gw.b1);
        Matrix dln2out = matmul_abt(dz1, transpose(lw.w1));
        const Matrix dx1_ln = layernorm_backward(dln2out, c.ln2, lw.ln2_g, gw.ln2_g, gw.ln2_b);
        add_inplace(dx, dx1_ln); // dx now = d(x after attention residual)

        // attention
        accumulate_atb(c.o, dx, gw.wo);
        const Matrix do_ = matmul_abt(dx, transpose(lw.wo));
        Matrix dq(do_.rows(), d), dk(do_.rows(), d), dv(do_.rows(), d);
        attention_backward(mc, c, do_, dq, dk, dv);
        accumulate_atb(c.a, dq, gw.wq);
        accumulate_atb(c.a, dk, gw.wk);
        accumulate_atb(c.a, dv, gw.wv);
        Matrix da = matmul_abt(dq, transpose(lw.wq));
        add_inplace(da, matmul_abt(dk, transpose(lw.wk)));
        add_inplace(da, matmul_abt(dv, transpose(lw.wv)));
        const Matrix dx_ln = layernorm_backward(da, c.ln1, lw.ln1_g, gw.ln1_g, gw.ln1_b);
        add_inplace(dx, dx_ln); // residual + LN1 path
    }

    for (int t = 0; t < n; ++t) {
        const int tok = layout.tokens[static_cast<size_t>(t)].id;
        const int pos = layout.positions[static_cast<size_t>(t)];
        const auto dxr = dx.row(t);
        auto gt = grad.tok_emb.row(tok);
        auto gp = grad.pos_emb.row(pos);
        for (int j = 0; j < d; ++j) {
            gt[static_cast<size_t>(j)] += dxr[static_cast<size_t>(j)];
            gp[static_cast<size_t>(j)] += dxr[static_cast<size_t>(j)];
        }
    }
    return loss;
}

double loss_only(const ModelWeights& w, const PromptLayout& layout) {
    AttentionConfig cfg; // standard
    const ForwardTrace trace = forward(layout, nullptr, cfg, w);
    double nll = 0.0;
    for (int t = 1; t < layout.size(); ++t) {
        nll -= trace.logprobs[static_cast<size_t>(t)];
    }
    return nll / (layout.size() - 1);
}

void zero_grads(ModelWeights& grad) {
    for_each_tensor(grad, [](const std::string&, std::vector<double>& d) {
        std::fill(d.begin(), d.end(), 0.0);
    });
}

double grad_global_norm(const ModelWeights& grad) {
    double sum = 0.0;
    for_each_tensor(const_cast<ModelWeights&>(grad),
                    [&](const std::string&, std::vector<double>& d) {
                        for (double x : d) {
                            sum += x * x;
                        }
                    });
    return std::sqrt(sum);
}

TrainStats train_toy(ModelWeights& w, const std::vector<PromptLayout>& corpus,
                     const TrainOptions& opts) {
    if (corpus.empty()) {
        throw std::invalid_argument("train_toy: empty corpus");
    }
    if (opts.batch < 1 || opts.steps < 0) {
        throw std::invalid_argument("train_toy: bad options");
    }
    SeededRng rng(derive_seed(opts.seed, "train"));
    ModelWeights grad = zeros_like(w.cfg);
    TrainStats stats;
    double initial = 0.0;
    for (int step = 0; step < opts.steps; ++step) {
        zero_grads(grad);
        double loss = 0.0;
        try {
            for (int b = 0; b < opts.batch; ++b) {
                const size_t idx = static_cast<size_t>(rng.next_below(corpus.size()));
                loss += loss_and_grad(w, corpus[idx], grad);
            }
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("training diverged at step " + std::to_string(step) + ": " +
                                     e.what());
        }
        loss /= opts.batch;
        if (step == 0) {
            initial = loss;
        }
        if (!std::isfinite(loss) || loss > initial * opts.divergence_factor) {
            throw std::runtime_error("training diverged at step " + std::to_string(step) +
                                     ": loss " + std::to_string(loss) + " vs initial " +
                                     std::to_string(initial));
        }
        const double inv_batch = 1.0 / opts.batch;
        for_each_tensor(grad, [&](const std::string&, std::vector<double>& dgr) {
            for (double& x : dgr) {
                x *= inv_batch;
            }
        });
        const double norm = grad_global_norm(grad);
        const double scale = norm > opts.clip_norm ? opts.clip_norm / norm : 1.0;
        // step tensor-by-tensor in the shared enumeration order
        std::vector<std::vector<double>*> wt, gt;
        for_each_tensor(w, [&](const std::string&, std::vector<double>& d) { wt.push_back(&d); });
        for_each_tensor(grad, [&](const std::string&, std::vector<double>& d) { gt.push_back(&d); });
        for (size_t i = 0; i < wt.size(); ++i) {
            auto& dst = *wt[i];
            const auto& src = *gt[i];
            for (size_t j = 0; j < dst.size(); ++j) {
                dst[j] -= opts.lr * scale * src[j];
            }
        }
        stats.step_losses.push_back(loss);
    }
    if (opts.steps >= 20) {
        const int window = std::max(1, opts.steps / 5);
        double first = 0.0;
        double last = 0.0;
        for (int i = 0; i < window; ++i) {
            first += stats.step_losses[static_cast<size_t>(i)];
            last += stats.step_losses[static_cast<size_t>(opts.steps - window + i)];
        }
        stats.initial_smoothed = first / window;
        stats.final_smoothed = last / window;
        if (stats.final_smoothed >= stats.initial_smoothed) {
            throw std::runtime_error("training failed to reduce smoothed loss (" +
                                     std::to_string(stats.initial_smoothed) + " -> " +
                                     std::to_string(stats.final_smoothed) + ")");
        }
    } else if (!stats.step_losses.empty()) {
        stats.initial_smoothed = stats.step_losses.front();
        stats.final_smoothed = stats.step_losses.back();
    }
    return stats;
}

} // namespace ficl
