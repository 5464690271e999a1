#include "ficl/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ficl {

std::string variant_name(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::Standard: return "standard";
        case AttentionVariant::Linear: return "linear";
        case AttentionVariant::Filtering: return "filtering";
        case AttentionVariant::Hierarchical: return "hierarchical";
    }
    return "?";
}

AttentionVariant variant_from_name(const std::string& name) {
    if (name == "standard") return AttentionVariant::Standard;
    if (name == "linear") return AttentionVariant::Linear;
    if (name == "filtering") return AttentionVariant::Filtering;
    if (name == "hierarchical") return AttentionVariant::Hierarchical;
    throw std::invalid_argument("unknown attention variant: " + name);
}

void AttentionConfig::validate() const {
    if (p < 0.0 || p >= 1.0) {
        throw std::invalid_argument("attention config: p must lie in [0, 1)");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("attention config: batch size must be >= 1");
    }
}

namespace attn {

namespace {

template <typename F>
void for_each_row(const RowView& view, F&& f) {
    int k = 0;
    for (int s = 0; s < view.n_segs; ++s) {
        for (int32_t row : view.segs[static_cast<size_t>(s)]) {
            f(k++, row);
        }
    }
}

int count_rows(const RowView& view) {
    int n = 0;
    for (int s = 0; s < view.n_segs; ++s) {
        n += static_cast<int>(view.segs[static_cast<size_t>(s)].size());
    }
    return n;
}

inline bool is_demo_row(const RowView& view, int32_t row) {
    const int32_t ord = view.demo_ord[static_cast<size_t>(row)];
    return ord > 0 && ord <= view.demo_max;
}

inline double row_score(std::span<const double> q, const RowView& view, int32_t row, double scale) {
    const double* key = view.keys->data() +
                        static_cast<size_t>(row) * view.keys->cols() + view.key_col;
    double acc = 0.0;
    for (int d = 0; d < view.d_k; ++d) {
        acc += q[static_cast<size_t>(d)] * key[d];
    }
    return scale == 1.0 ? acc : acc * scale;
}

} // namespace

Stats attend(std::span<const double> query, const RowView& view, double p, bool scale,
             std::span<double> out, Scratch& scratch, AttentionOutcome* record) {
    if (p < 0.0) {
        throw std::invalid_argument("attend: negative filtering threshold");
    }
    const int n = count_rows(view);
    if (n == 0) {
        throw std::runtime_error("attention over empty visible context");
    }
    const double scale_v = scale ? 1.0 / std::sqrt(static_cast<double>(view.d_k)) : 1.0;

    Stats st;
    st.rows = n;
    scratch.scores.resize(static_cast<size_t>(n));
    scratch.masked.assign(static_cast<size_t>(n), 0);

    for_each_row(view, [&](int k, int32_t row) {
        scratch.scores[static_cast<size_t>(k)] = row_score(query, view, row, scale_v);
        if (view.demo_ord[static_cast<size_t>(row)] > 0) {
            ++st.demo_tokens;
        }
        if (is_demo_row(view, row)) {
            ++st.demo_rows;
        }
    });

    // floor(p*m) lowest-scoring demonstration rows get the -inf mask; ties
    // break toward the lowest row index so the masked set is deterministic
    // and nested across thresholds
    int k_mask = static_cast<int>(std::floor(p * st.demo_rows));
    if (st.demo_rows > 0 && k_mask >= st.demo_rows) {
        k_mask = st.demo_rows - 1;
        st.capped = true;
    }
    if (k_mask > 0) {
        scratch.order.clear();
        for_each_row(view, [&](int k, int32_t row) {
            if (is_demo_row(view, row)) {
                scratch.order.emplace_back(scratch.scores[static_cast<size_t>(k)], k);
            }
        });
        std::sort(scratch.order.begin(), scratch.order.end());
        for (int i = 0; i < k_mask; ++i) {
            scratch.masked[static_cast<size_t>(scratch.order[static_cast<size_t>(i)].second)] = 1;
        }
        st.masked = k_mask;
    }

    double max_score = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n; ++k) {
        if (!scratch.masked[static_cast<size_t>(k)] && scratch.scores[static_cast<size_t>(k)] > max_score) {
            max_score = scratch.scores[static_cast<size_t>(k)];
        }
    }
    st.max_score = max_score;

    scratch.exps.resize(static_cast<size_t>(n));
    double denom = 0.0;
    for_each_row(view, [&](int k, int32_t row) {
        double e = 0.0;
        if (!scratch.masked[static_cast<size_t>(k)]) {
            e = std::exp(scratch.scores[static_cast<size_t>(k)] - max_score);
            denom += e;
            if (is_demo_row(view, row)) {
                st.exp_sum_demo += e;
            }
        }
        scratch.exps[static_cast<size_t>(k)] = e;
    });
    st.exp_sum_all = denom;

    std::fill(out.begin(), out.end(), 0.0);
    double lambda = 0.0;
    for_each_row(view, [&](int k, int32_t row) {
        const double e = scratch.exps[static_cast<size_t>(k)];
        if (e == 0.0) {
            return;
        }
        const double w = e / denom;
        const double* val = view.values->data() +
                            static_cast<size_t>(row) * view.values->cols() + view.val_col;
        for (int d = 0; d < view.d_v; ++d) {
            out[static_cast<size_t>(d)] += w * val[d];
        }
        if (is_demo_row(view, row)) {
            lambda += w;
        }
    });
    st.lambda = lambda;

    if (record != nullptr) {
        record->output.assign(out.begin(), out.end());
        record->rows.resize(static_cast<size_t>(n));
        record->scores = scratch.scores;
        record->weights.assign(static_cast<size_t>(n), 0.0);
        record->masked.assign(scratch.masked.begin(), scratch.masked.end());
        for_each_row(view, [&](int k, int32_t row) {
            record->rows[static_cast<size_t>(k)] = row;
            const double e = scratch.exps[static_cast<size_t>(k)];
            record->weights[static_cast<size_t>(k)] = e == 0.0 ? 0.0 : e / denom;
        });
        record->lambda = lambda;
        record->mask_capped = st.capped;
    }
    return st;
}

void attend_linear(std::span<const double> query, const RowView& view, bool scale,
                   std::span<double> out_demo, std::span<double> out_query, Scratch& scratch) {
    (void)scratch;
    const double scale_v = scale ? 1.0 / std::sqrt(static_cast<double>(view.d_k)) : 1.0;
    std::fill(out_demo.begin(), out_demo.end(), 0.0);
    std::fill(out_query.begin(), out_query.end(), 0.0);
    for_each_row(view, [&](int, int32_t row) {
        const double s = row_score(query, view, row, scale_v);
        const double* val = view.values->data() +
                            static_cast<size_t>(row) * view.values->cols() + view.val_col;
        std::span<double> acc = is_demo_row(view, row) ? out_demo : out_query;
        for (int d = 0; d < view.d_v; ++d) {
            acc[static_cast<size_t>(d)] += s * val[d];
        }
    });
}

std::vector<double> interbatch_weights(std::span<const Stats> stats, bool demo_only) {
    if (stats.empty()) {
        throw std::invalid_argument("inter-batch weights: no batches");
    }
    double global_max = -std::numeric_limits<double>::infinity();
    for (const Stats& s : stats) {
        global_max = std::max(global_max, s.max_score);
    }
    std::vector<double> w(stats.size(), 0.0);
    double total = 0.0;
    for (size_t i = 0; i < stats.size(); ++i) {
        const double base = demo_only ? stats[i].exp_sum_demo : stats[i].exp_sum_all;
        w[i] = base * std::exp(stats[i].max_score - global_max);
        total += w[i];
    }
    if (total <= 0.0) {
        throw std::runtime_error("inter-batch weights: zero total score mass");
    }
    for (double& x : w) {
        x /= total;
    }
    return w;
}

} // namespace attn

namespace {

void validate_input(const AttentionInput& in) {
    if (in.keys.rows() != in.values.rows()) {
        throw std::invalid_argument("attention input: keys/values row mismatch");
    }
    if (static_cast<int>(in.query_vec.size()) != in.keys.cols()) {
        throw std::invalid_argument("attention input: query width does not match keys");
    }
    if (in.is_demo.size() != static_cast<size_t>(in.keys.rows()) ||
        in.visible.size() != static_cast<size_t>(in.keys.rows())) {
        throw std::invalid_argument("attention input: flag lengths do not match rows");
    }
}

// RowView over an AttentionInput's visible subset; demo ordinals synthesized
// from the boolean flags. `index`/`ord` are caller-owned storage.
attn::RowView make_view(const AttentionInput& in, std::vector<int32_t>& index,
                        std::vector<int32_t>& ord) {
    index.clear();
    ord.resize(static_cast<size_t>(in.keys.rows()));
    for (int r = 0; r < in.keys.rows(); ++r) {
        ord[static_cast<size_t>(r)] = in.is_demo[static_cast<size_t>(r)] ? 1 : 0;
        if (in.visible[static_cast<size_t>(r)]) {
            index.push_back(r);
        }
    }
    attn::RowView view;
    view.keys = &in.keys;
    view.values = &in.values;
    view.d_k = in.keys.cols();
    view.d_v = in.values.cols();
    view.segs[0] = index;
    view.n_segs = 1;
    view.demo_ord = ord;
    view.demo_max = 1;
    return view;
}

} // namespace

AttentionOutcome standard_attention(const AttentionInput& in, bool scale_scores) {
    return filtering_attention(in, 0.0, scale_scores);
}

AttentionOutcome filtering_attention(const AttentionInput& in, double p, bool scale_scores) {
    validate_input(in);
    std::vector<int32_t> index;
    std::vector<int32_t> ord;
    const attn::RowView view = make_view(in, index, ord);
    attn::Scratch scratch;
    AttentionOutcome outcome;
    std::vector<double> out(static_cast<size_t>(in.values.cols()), 0.0);
    attn::attend(in.query_vec, view, p, scale_scores, out, scratch, &outcome);
    return outcome;
}

LinearOutcome linear_attention(const AttentionInput& in, bool scale_scores) {
    validate_input(in);
    std::vector<int32_t> index;
    std::vector<int32_t> ord;
    const attn::RowView view = make_view(in, index, ord);
    attn::Scratch scratch;
    LinearOutcome res;
    res.demo_part.assign(static_cast<size_t>(in.values.cols()), 0.0);
    res.query_part.assign(static_cast<size_t>(in.values.cols()), 0.0);
    attn::attend_linear(in.query_vec, view, scale_scores, res.demo_part, res.query_part, scratch);
    res.output.resize(res.demo_part.size());
    for (size_t d = 0; d < res.output.size(); ++d) {
        res.output[d] = res.demo_part[d] + res.query_part[d];
    }
    return res;
}

LambdaParts lambda_decompose(const AttentionInput& in, bool scale_scores) {
    validate_input(in);
    const double scale_v = scale_scores ? 1.0 / std::sqrt(static_cast<double>(in.keys.cols())) : 1.0;
    std::vector<int> demo_rows;
    std::vector<int> query_rows;
    for (int r = 0; r < in.keys.rows(); ++r) {
        if (!in.visible[static_cast<size_t>(r)]) {
            continue;
        }
        (in.is_demo[static_cast<size_t>(r)] ? demo_rows : query_rows).push_back(r);
    }
    if (query_rows.empty()) {
        throw std::invalid_argument("lambda_decompose: empty query block");
    }

    auto block_scores = [&](const std::vector<int>& rows) {
        std::vector<double> s(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            s[i] = dot(in.query_vec, in.keys.row(rows[i])) * scale_v;
        }
        return s;
    };
    auto block_attention = [&](const std::vector<int>& rows, const std::vector<double>& s) {
        std::vector<double> out(static_cast<size_t>(in.values.cols()), 0.0);
        const double m = *std::max_element(s.begin(), s.end());
        double denom = 0.0;
        for (double x : s) {
            denom += std::exp(x - m);
        }
        for (size_t i = 0; i < rows.size(); ++i) {
            const double w = std::exp(s[i] - m) / denom;
            const auto val = in.values.row(rows[i]);
            for (size_t d = 0; d < out.size(); ++d) {
                out[d] += w * val[d];
            }
        }
        return out;
    };

    LambdaParts parts;
    const std::vector<double> qs = block_scores(query_rows);
    parts.query_part = block_attention(query_rows, qs);
    if (demo_rows.empty()) {
        parts.lambda = 0.0;
        parts.demo_part.assign(static_cast<size_t>(in.values.cols()), 0.0);
        return parts;
    }
    const std::vector<double> ds = block_scores(demo_rows);
    parts.demo_part = block_attention(demo_rows, ds);

    double global_max = *std::max_element(qs.begin(), qs.end());
    global_max = std::max(global_max, *std::max_element(ds.begin(), ds.end()));
    double sum_d = 0.0;
    double sum_q = 0.0;
    for (double x : ds) {
        sum_d += std::exp(x - global_max);
    }
    for (double x : qs) {
        sum_q += std::exp(x - global_max);
    }
    parts.lambda = sum_d / (sum_d + sum_q);
    return parts;
}

HierarchicalOutcome hierarchical_attention(std::span<const AttentionInput> batches, double p,
                                           bool scale_scores, bool demo_only_sums) {
    if (batches.empty()) {
        throw std::invalid_argument("hierarchical attention: empty batch list");
    }
    const int d_v = batches[0].values.cols();
    HierarchicalOutcome res;
    res.per_batch.resize(batches.size());
    std::vector<attn::Stats> stats(batches.size());
    std::vector<std::vector<double>> outs(batches.size());

    attn::Scratch scratch;
    std::vector<int32_t> index;
    std::vector<int32_t> ord;
    for (size_t i = 0; i < batches.size(); ++i) {
        validate_input(batches[i]);
        if (batches[i].values.cols() != d_v) {
            throw std::invalid_argument("hierarchical attention: value width mismatch across batches");
        }
        const attn::RowView view = make_view(batches[i], index, ord);
        outs[i].assign(static_cast<size_t>(d_v), 0.0);
        stats[i] = attn::attend(batches[i].query_vec, view, p, scale_scores, outs[i], scratch,
                                &res.per_batch[i]);
    }
    res.batch_weights = attn::interbatch_weights(stats, demo_only_sums);

    res.output.resize(static_cast<size_t>(d_v));
    for (int d = 0; d < d_v; ++d) {
        res.output[static_cast<size_t>(d)] = res.batch_weights[0] * outs[0][static_cast<size_t>(d)];
    }
    for (size_t i = 1; i < batches.size(); ++i) {
        for (int d = 0; d < d_v; ++d) {
            res.output[static_cast<size_t>(d)] += res.batch_weights[i] * outs[i][static_cast<size_t>(d)];
        }
    }
    for (size_t i = 0; i < batches.size(); ++i) {
        res.lambda += res.batch_weights[i] * stats[i].lambda;
        res.query_mass += res.batch_weights[i] * (1.0 - stats[i].lambda);
    }
    return res;
}

} // namespace ficl
