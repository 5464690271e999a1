#pragma once

#include "ficl/matrix.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ficl {

enum class AttentionVariant {
    Standard,
    Linear,
    Filtering,
    Hierarchical,
};

std::string variant_name(AttentionVariant v);
AttentionVariant variant_from_name(const std::string& name);

struct AttentionConfig {
    AttentionVariant variant = AttentionVariant::Standard;
    double p = 0.0;     // triviality filtering threshold, [0, 1)
    int batch_size = 1; // B, used by Hierarchical only
    // 1/sqrt(d_head) score scaling; the attention-competition equations are
    // written without it, so it defaults to off everywhere.
    bool scale_scores = false;
    // inter-batch weights from demonstration score entries only, instead of
    // every unmasked entry of the batch (comparison mode; default literal)
    bool interbatch_demo_only = false;

    void validate() const;
};

// One attention call: a single query vector against a shared context. Rows of
// keys/values are context positions; is_demo marks rows that compete as
// demonstration content (maskable by filtering, counted by lambda).
struct AttentionInput {
    std::vector<double> query_vec;
    Matrix keys;   // rows x d_k
    Matrix values; // rows x d_v
    std::vector<uint8_t> is_demo;
    std::vector<uint8_t> visible;
};

struct AttentionOutcome {
    std::vector<double> output;    // d_v
    std::vector<int32_t> rows;     // visible row indices, iteration order
    std::vector<double> scores;    // raw pre-softmax, parallel to rows
    std::vector<double> weights;   // post-softmax, parallel to rows; masked rows exactly 0
    std::vector<uint8_t> masked;   // parallel to rows
    double lambda = 0.0;           // weight mass on demonstration rows
    bool mask_capped = false;      // filtering wanted to mask every demonstration row
};

struct LinearOutcome {
    std::vector<double> output;     // demo_part + query_part, elementwise
    std::vector<double> demo_part;  // accumulated over demonstration rows only
    std::vector<double> query_part; // accumulated over the remaining rows
};

struct LambdaParts {
    double lambda = 0.0;
    std::vector<double> query_part; // Att(q, Q_k, Q_v)
    std::vector<double> demo_part;  // Att(q, D_k, D_v); zeros when no demo rows
};

struct HierarchicalOutcome {
    std::vector<double> output;
    std::vector<double> batch_weights; // w_i, non-negative, sum 1
    std::vector<AttentionOutcome> per_batch;
    double lambda = 0.0;     // sum_i w_i * lambda_i
    double query_mass = 0.0; // sum_i w_i * (1 - lambda_i)
};

// softmax(q K^T) V over the visible rows
AttentionOutcome standard_attention(const AttentionInput& in, bool scale_scores = false);

// q K^T V with no softmax; demo and query blocks are accumulated separately
// and summed, so the block split is additive exactly, not just in real
// arithmetic
LinearOutcome linear_attention(const AttentionInput& in, bool scale_scores = false);

// lambda = demonstration share of the exponentiated score mass, plus the two
// block-local attentions; (1-lambda)*query_part + lambda*demo_part equals
// standard attention up to rounding
LambdaParts lambda_decompose(const AttentionInput& in, bool scale_scores = false);

// masks the floor(p*m) lowest-scoring visible demonstration rows (ties: lowest
// row index first) with -inf before the softmax; query rows are never masked.
// p that would mask every demonstration row is capped at m-1 and flagged.
AttentionOutcome filtering_attention(const AttentionInput& in, double p, bool scale_scores = false);

// intra-batch filtering attention per batch (each input = that batch's rows
// plus the shared query rows), then an inter-batch sum weighted by each
// batch's exponentiated unmasked score mass
HierarchicalOutcome hierarchical_attention(std::span<const AttentionInput> batches, double p,
                                           bool scale_scores = false, bool demo_only_sums = false);

// ---- low-level core shared with the model forward pass ----

namespace attn {

// Visible rows as up to two ascending index segments over shared K/V storage
// (head slices addressed by column offset). demo_ord gives the owning
// demonstration ordinal per absolute row (0 = query side); rows with
// 0 < ord <= demo_max count as demonstration context.
struct RowView {
    const Matrix* keys = nullptr;
    const Matrix* values = nullptr;
    int key_col = 0;
    int val_col = 0;
    int d_k = 0;
    int d_v = 0;
    std::array<std::span<const int32_t>, 2> segs;
    int n_segs = 0;
    std::span<const int32_t> demo_ord;
    int32_t demo_max = 0;
};

struct Stats {
    double lambda = 0.0;
    double max_score = 0.0;    // over unmasked rows
    double exp_sum_all = 0.0;  // sum exp(s - max_score), unmasked rows
    double exp_sum_demo = 0.0; // same, demonstration rows only
    int rows = 0;
    int demo_rows = 0;   // demonstration-context rows, the m in floor(p*m)
    int demo_tokens = 0; // rows with any demonstration ordinal (cost accounting)
    int masked = 0;
    bool capped = false;
};

// reusable buffers; one per thread
struct Scratch {
    std::vector<double> scores;
    std::vector<double> exps;
    std::vector<uint8_t> masked;
    std::vector<std::pair<double, int32_t>> order;
    std::vector<int32_t> index;
};

// Softmax attention with triviality filtering (p = 0 leaves every row
// unmasked and is bit-identical to standard attention). Writes the weighted
// value sum into `out` (overwritten) and returns the score statistics.
Stats attend(std::span<const double> query, const RowView& view, double p, bool scale,
             std::span<double> out, Scratch& scratch, AttentionOutcome* record = nullptr);

// Linear (softmax-free) attention; demo and query accumulators kept separate.
void attend_linear(std::span<const double> query, const RowView& view, bool scale,
                   std::span<double> out_demo, std::span<double> out_query, Scratch& scratch);

// w_i per batch from intra-batch score statistics; stabilized by the global
// maximum, exact 1.0 for a single batch
std::vector<double> interbatch_weights(std::span<const Stats> stats, bool demo_only);

} // namespace attn

} // namespace ficl
