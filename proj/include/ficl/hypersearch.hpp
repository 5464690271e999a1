#pragma once

#include "ficl/attention.hpp"
#include "ficl/matrix.hpp"
#include "ficl/model.hpp"
#include "ficl/prompt.hpp"

#include <json.hpp>

#include <span>
#include <vector>

namespace ficl {

// D(p, i): accumulated response perplexity with i demonstrations of context,
// i in [0, N-1], summed over `runs` random demonstration orderings.
struct PplTable {
    std::vector<double> candidates; // threshold candidates, row order
    int demo_count = 0;             // N
    int runs = 0;
    Matrix values; // |candidates| x N

    nlohmann::json to_json() const;
};

// Seam for the table builder: given an ordered demonstration selection and a
// filtering threshold, return the teacher-forced perplexity of each response.
class PplEvaluator {
public:
    virtual ~PplEvaluator() = default;
    virtual std::vector<double> response_ppls(std::span<const Demo> demos, double p) = 0;
};

// Real evaluator: one flat filtering forward per call; responses of
// demonstration j see demonstrations 1..j-1 as context.
class ModelPplEvaluator : public PplEvaluator {
public:
    ModelPplEvaluator(const ModelWeights& w, const PromptTemplate& tpl, const CharVocab& vocab,
                      bool scale_scores = false)
        : w_(w), tpl_(tpl), vocab_(vocab), scale_scores_(scale_scores) {}
    std::vector<double> response_ppls(std::span<const Demo> demos, double p) override;

    uint64_t forward_passes() const { return forward_passes_; }

private:
    const ModelWeights& w_;
    const PromptTemplate& tpl_;
    const CharVocab& vocab_;
    bool scale_scores_ = false;
    uint64_t forward_passes_ = 0;
};

// Scripted evaluator for tests and the CLI mock mode: ppl of response j is
// row[j-1] for the row matching p (ignores demo content).
class ScriptedPplEvaluator : public PplEvaluator {
public:
    ScriptedPplEvaluator(std::vector<double> candidates, Matrix rows)
        : candidates_(std::move(candidates)), rows_(std::move(rows)) {}
    std::vector<double> response_ppls(std::span<const Demo> demos, double p) override;

private:
    std::vector<double> candidates_;
    Matrix rows_;
};

// One (p, run) cell selects N demonstrations uniformly without replacement
// from the pool and accumulates the N response perplexities into D(p, 0..N-1).
// Cells run independently; the accumulation into D happens in fixed order.
PplTable build_ppl_table(std::span<const double> candidates, PplEvaluator& evaluator,
                         std::span<const Demo> pool, int n_demos, int runs, uint64_t seed,
                         int jobs = 1);

struct HyperSearchResult {
    double chosen_p = 0.0;
    int chosen_b = 0;
    bool fallback_b = false; // no increasing trend; B = N
    PplTable raw;
    Matrix smoothed;                  // pairwise window sums
    Matrix trend;                     // |candidates| x N, valid columns [2, N-2]
    std::vector<double> per_p_total;  // sum of the smoothed row

    nlohmann::json to_json() const;
};

// Smoothing D(p,i) += D(p,i+1) in increasing i (pairwise sums of the original
// row), trend Dbar(p,i) = D(p,i) - D(p,i-2) for i in [2, N-2]; p = argmin of
// the smoothed row total (ties toward smaller p), B = first i with positive
// trend, falling back to N when the trend never turns positive.
HyperSearchResult select_hyperparameters(const PplTable& table);

} // namespace ficl
