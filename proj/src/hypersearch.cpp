#include "ficl/hypersearch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ficl {

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) {
            row.push_back(m.at(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

nlohmann::json PplTable::to_json() const {
    return nlohmann::json{{"candidates", candidates},
                          {"demo_count", demo_count},
                          {"runs", runs},
                          {"values", matrix_to_json(values)}};
}

std::vector<double> ModelPplEvaluator::response_ppls(std::span<const Demo> demos, double p) {
    std::vector<Demo> seq(demos.begin(), demos.end());
    const PromptLayout layout = assemble_demos_only(seq, tpl_, vocab_);
    AttentionConfig cfg;
    cfg.variant = p == 0.0 ? AttentionVariant::Standard : AttentionVariant::Filtering;
    cfg.p = p;
    cfg.scale_scores = scale_scores_;
    ++forward_passes_;
    return response_perplexities(layout, cfg, w_);
}

std::vector<double> ScriptedPplEvaluator::response_ppls(std::span<const Demo> demos, double p) {
    int row = -1;
    for (size_t i = 0; i < candidates_.size(); ++i) {
        if (candidates_[i] == p) {
            row = static_cast<int>(i);
            break;
        }
    }
    if (row < 0) {
        throw std::invalid_argument("scripted ppl: unknown threshold");
    }
    if (static_cast<int>(demos.size()) > rows_.cols()) {
        throw std::invalid_argument("scripted ppl: more demos than scripted values");
    }
    std::vector<double> out(demos.size());
    for (size_t j = 0; j < demos.size(); ++j) {
        out[j] = rows_.at(row, static_cast<int>(j));
    }
    return out;
}

PplTable build_ppl_table(std::span<const double> candidates, PplEvaluator& evaluator,
                         std::span<const Demo> pool, int n_demos, int runs, uint64_t seed,
                         int jobs) {
    if (candidates.empty()) {
        throw std::invalid_argument("build_ppl_table: empty candidate set");
    }
    if (runs < 1) {
        throw std::invalid_argument("build_ppl_table: runs must be >= 1");
    }
    if (static_cast<int>(pool.size()) < n_demos || n_demos < 1) {
        throw std::invalid_argument("build_ppl_table: demonstration pool too small");
    }
    PplTable table;
    table.candidates.assign(candidates.begin(), candidates.end());
    table.demo_count = n_demos;
    table.runs = runs;
    table.values = Matrix(static_cast<int>(candidates.size()), n_demos);

    const int cells = static_cast<int>(candidates.size()) * runs;
    std::vector<std::vector<double>> cell_ppls(static_cast<size_t>(cells));

#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
    for (int cell = 0; cell < cells; ++cell) {
        const int pi = cell / runs;
        const int run = cell % runs;
        // fresh uniform selection without replacement per (p, run)
        SeededRng rng(derive_seed(seed, "hypersearch-p" + std::to_string(pi) + "-run" +
                                            std::to_string(run)));
        std::vector<int> order(pool.size());
        for (size_t i = 0; i < order.size(); ++i) {
            order[i] = static_cast<int>(i);
        }
        rng.shuffle(order);
        std::vector<Demo> selection;
        selection.reserve(static_cast<size_t>(n_demos));
        for (int i = 0; i < n_demos; ++i) {
            selection.push_back(pool[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        }
        std::vector<double> ppls =
            evaluator.response_ppls(selection, table.candidates[static_cast<size_t>(pi)]);
        if (static_cast<int>(ppls.size()) != n_demos) {
            throw std::runtime_error("build_ppl_table: evaluator returned wrong count");
        }
        cell_ppls[static_cast<size_t>(cell)] = std::move(ppls);
    }

    // fixed-order accumulation keeps the table independent of job count
    for (int cell = 0; cell < cells; ++cell) {
        const int pi = cell / runs;
        const auto& ppls = cell_ppls[static_cast<size_t>(cell)];
        for (int j = 0; j < n_demos; ++j) {
            table.values.at(pi, j) += ppls[static_cast<size_t>(j)];
        }
    }
    return table;
}

HyperSearchResult select_hyperparameters(const PplTable& table) {
    const int n = table.demo_count;
    const int np = table.values.rows();
    if (n < 4) {
        throw std::invalid_argument("select_hyperparameters: need N >= 4");
    }
    HyperSearchResult res;
    res.raw = table;

    // in-place increasing-i update: each cell becomes the pairwise sum of the
    // original row values, the last column stays as-is
    res.smoothed = table.values;
    for (int pi = 0; pi < np; ++pi) {
        for (int i = 0; i + 1 < n; ++i) {
            res.smoothed.at(pi, i) += table.values.at(pi, i + 1);
        }
    }
    res.trend = Matrix(np, n);
    for (int pi = 0; pi < np; ++pi) {
        for (int i = 2; i <= n - 2; ++i) {
            res.trend.at(pi, i) = res.smoothed.at(pi, i) - res.smoothed.at(pi, i - 2);
        }
    }
    res.per_p_total.assign(static_cast<size_t>(np), 0.0);
    int best = 0;
    for (int pi = 0; pi < np; ++pi) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            total += res.smoothed.at(pi, i);
        }
        res.per_p_total[static_cast<size_t>(pi)] = total;
        if (total < res.per_p_total[static_cast<size_t>(best)]) {
            best = pi;
        }
    }
    res.chosen_p = table.candidates[static_cast<size_t>(best)];

    res.chosen_b = n;
    res.fallback_b = true;
    for (int i = 2; i <= n - 2; ++i) {
        if (res.trend.at(best, i) > 0.0) {
            res.chosen_b = i;
            res.fallback_b = false;
            break;
        }
    }
    return res;
}

nlohmann::json HyperSearchResult::to_json() const {
    return nlohmann::json{{"chosen_p", chosen_p},
                          {"chosen_b", chosen_b},
                          {"fallback_b", fallback_b},
                          {"raw", raw.to_json()},
                          {"smoothed", matrix_to_json(smoothed)},
                          {"trend", matrix_to_json(trend)},
                          {"per_p_total", per_p_total}};
}

} // namespace ficl
