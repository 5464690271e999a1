#pragma once

#include "ficl/counta.hpp"
#include "ficl/model.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ficl {

enum class EvalMethod { ICL, EarlyStop, Filtering, FocusICL };

std::string method_name(EvalMethod m);
EvalMethod method_from_name(const std::string& name);

struct EvalOptions {
    EvalMethod method = EvalMethod::ICL;
    int n_demos = 8;
    int runs = 5;
    double temperature = 0.1;
    int max_new = 8;
    uint64_t seed = 0;
    double p = 0.0;     // Filtering / FocusICL
    int batch_size = 1; // FocusICL
    bool scale_scores = false;
    bool interbatch_demo_only = false;
    std::vector<int> earlystop_counts; // empty: 1,2,4,... up to n_demos
    int jobs = 1;
};

struct EvalRun {
    int run = 0;
    uint64_t seed = 0;
    int correct = 0;
    int total = 0;
    double accuracy = 0.0;
    int used_demos = 0; // EarlyStop's per-run validation argmax
};

struct EvalReport {
    std::string method_tag; // e.g. "FocusICL(p=0.1,B=8)"
    EvalOptions opts;
    std::vector<EvalRun> runs;
    double mean_accuracy = 0.0;
    double baseline_uniform = 0.0; // uniform guess over the answer range

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// Exact-match accuracy (whitespace-trimmed) over seeded demonstration
// selections. val_tasks are consulted by EarlyStop only. Throws when the
// demonstration pool overlaps the evaluation tasks.
EvalReport evaluate(const ModelWeights& w, std::span<const CountATask> tasks,
                    std::span<const CountATask> val_tasks, std::span<const CountATask> pool,
                    const EvalOptions& opts);

struct DispersionRow {
    int n = 0;
    // measured on this N's own forward pass, at the last prompt position,
    // averaged over layers and heads
    double lambda_run = 0.0;
    double query_mass_run = 0.0;
    // prefix-nested instrument from the largest-N run: demonstration share
    // restricted to the first n demonstrations' keys; exactly non-decreasing
    // in n (standard variant only, NaN otherwise)
    double lambda_nested = 0.0;
    double query_mass_nested = 0.0;
    std::vector<double> layer_lambda_run;    // per layer, mean over heads
    std::vector<double> layer_lambda_nested; // per layer, mean over heads
};

struct DispersionReport {
    std::vector<DispersionRow> rows;
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// n_values must be ascending; demonstration selections are prefix-nested so
// rows are comparable across n.
DispersionReport dispersion_sweep(const ModelWeights& w, const CountATask& probe_task,
                                  std::span<const CountATask> pool, std::span<const int> n_values,
                                  const AttentionConfig& cfg, uint64_t seed);

struct PadRow {
    int spaces = 0;
    double accuracy = 0.0;
    // query mass at the last prompt position of the first task's prompt
    double query_mass_run = 0.0;
    // counterfactual from the max-k run, competitors restricted to the first
    // `spaces` pad tokens per demonstration; strictly decreasing in k
    double query_mass_nested = 0.0;
};

struct PadReport {
    std::vector<PadRow> rows;
    bool run_mass_monotone = false; // whether the per-run masses also decreased
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// space_counts must include 0. Standard attention throughout (the probe asks
// what padding does to plain ICL).
PadReport padding_experiment(const ModelWeights& w, std::span<const CountATask> tasks,
                             std::span<const CountATask> pool, int n_demos,
                             std::span<const int> space_counts, uint64_t seed,
                             double temperature = 0.1, int max_new = 8);

struct PcaRow {
    int n = 0;
    double pc1 = 0.0;
    double pc2 = 0.0;
};

struct PcaReport {
    std::vector<PcaRow> rows;
    bool degenerate = false; // all hidden states identical; coordinates zeroed
    nlohmann::json to_json() const;
    std::string to_csv() const;
};

// Penultimate-layer hidden state of the last input token per n, projected
// onto the shared top-2 principal components.
PcaReport pca_probe(const ModelWeights& w, const CountATask& probe_task,
                    std::span<const CountATask> pool, std::span<const int> n_values,
                    const AttentionConfig& cfg, uint64_t seed);

struct CostEstimate {
    long long n = 0, b = 0, l = 0;
    double cost_icl = 0.0;   // N^2 L^2 (delta = 1)
    double cost_focus = 0.0; // N B L^2
    double ratio = 0.0;      // B / N
    nlohmann::json to_json() const;
};

CostEstimate cost_model(long long n, long long b, long long l);

// demonstration-target x demonstration-row score multiply-accumulates over
// one teacher-forced pass
uint64_t measure_demo_encoding_macs(const ModelWeights& w, const PromptLayout& layout,
                                    const BatchPartition* part, const AttentionConfig& cfg);

// shared helper: seeded shuffle of the pool, first n entries in order
std::vector<CountATask> select_demo_prefix(std::span<const CountATask> pool, int n, uint64_t seed);

} // namespace ficl
