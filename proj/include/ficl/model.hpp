#pragma once

#include "ficl/attention.hpp"
#include "ficl/partition.hpp"
#include "ficl/prompt.hpp"
#include "ficl/rng.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace ficl {

struct ModelConfig {
    int vocab_size = 96;
    int d_model = 64;
    int n_heads = 4;
    int n_layers = 3;
    int max_positions = 4096;
    uint64_t seed = 0;

    int d_head() const { return d_model / n_heads; }
    int d_ff() const { return 4 * d_model; }
    void validate() const;

    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
    static ModelConfig load_text(const std::string& path);

    bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
    std::vector<double> ln1_g, ln1_b;
    Matrix wq, wk, wv, wo; // d_model x d_model
    std::vector<double> ln2_g, ln2_b;
    Matrix w1;              // d_model x d_ff
    std::vector<double> b1;
    Matrix w2;              // d_ff x d_model
    std::vector<double> b2;
};

// Pre-norm decoder weights: token + learned absolute position embeddings,
// per-layer attention and GELU feed-forward blocks, final norm, unembedding.
struct ModelWeights {
    ModelConfig cfg;
    Matrix tok_emb; // vocab x d_model
    Matrix pos_emb; // max_positions x d_model
    std::vector<LayerWeights> layers;
    std::vector<double> lnf_g, lnf_b;
    Matrix unembed; // d_model x vocab
};

ModelWeights init_weights(const ModelConfig& cfg);
ModelWeights zeros_like(const ModelConfig& cfg);

// Visits every parameter tensor in the serialization order.
template <typename W, typename F>
void for_each_tensor(W& w, F&& f) {
    f("tok_emb", w.tok_emb.storage());
    f("pos_emb", w.pos_emb.storage());
    for (size_t l = 0; l < w.layers.size(); ++l) {
        auto& lw = w.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        f(p + "ln1_g", lw.ln1_g);
        f(p + "ln1_b", lw.ln1_b);
        f(p + "wq", lw.wq.storage());
        f(p + "wk", lw.wk.storage());
        f(p + "wv", lw.wv.storage());
        f(p + "wo", lw.wo.storage());
        f(p + "ln2_g", lw.ln2_g);
        f(p + "ln2_b", lw.ln2_b);
        f(p + "w1", lw.w1.storage());
        f(p + "b1", lw.b1);
        f(p + "w2", lw.w2.storage());
        f(p + "b2", lw.b2);
    }
    f("lnf_g", w.lnf_g);
    f("lnf_b", w.lnf_b);
    f("unembed", w.unembed.storage());
}

size_t param_count(const ModelConfig& cfg);

// Binary weight file: magic, version, config header, raw little-endian
// 64-bit floats in for_each_tensor order. Round-trips bit-exactly.
void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);
ModelConfig peek_weights_config(const std::string& path);

// throws naming the first differing field
void ensure_config_match(const ModelConfig& expected, const ModelConfig& actual);

struct PositionAttnStats {
    double lambda = 0.0;     // weight mass on demonstration-context rows
    double query_mass = 0.0; // 1 - lambda over the same row set
    int masked = 0;          // filtered rows (summed over batches)
};

struct RecordedOutcome {
    int layer = 0;
    int head = 0;
    int position = 0;
    AttentionOutcome outcome;                // single context (flat variants)
    std::vector<AttentionOutcome> per_batch; // hierarchical query-side targets
    std::vector<double> batch_weights;
};

struct TraceSpec {
    bool attention_stats = false; // lambda / query mass / masked per (layer, head, pos)
    bool full_logits = false;
    std::vector<int> outcome_positions;              // record full score/weight vectors
    std::vector<std::pair<int, int>> hidden_states;  // (layer in [0, n_layers], token)
    uint64_t* demo_macs = nullptr; // demo-target x demo-row score multiply-accumulates
};

struct ForwardTrace {
    int n_tokens = 0;
    int n_layers = 0;
    int n_heads = 0;
    // log p(token[t] | prefix); index 0 has no predecessor and holds NaN
    std::vector<double> logprobs;
    std::vector<double> last_logits;
    Matrix logits; // n x vocab when full_logits requested
    std::vector<PositionAttnStats> stats; // [(l*H + h)*n + t] when attention_stats
    std::vector<RecordedOutcome> outcomes;
    std::map<std::pair<int, int>, std::vector<double>> hidden;

    const PositionAttnStats& stat(int layer, int head, int t) const {
        return stats[static_cast<size_t>((layer * n_heads + head) * n_tokens + t)];
    }
};

// Teacher-forced forward pass. partition must be present exactly when
// cfg.variant == Hierarchical. Demonstration positions attend inside their own
// batch only; query-side positions run one intra-batch attention per batch and
// merge through the inter-batch weights, per layer and per head.
ForwardTrace forward(const PromptLayout& layout, const BatchPartition* part,
                     const AttentionConfig& cfg, const ModelWeights& w,
                     const TraceSpec& spec = {});

// Autoregressive sampling; appends GeneratedResponse tokens to the layout and
// returns them. temperature 0 is greedy (ties toward the lowest token id);
// otherwise sampling follows the seeded rng. Stops after stop_token (the
// newline terminator, id 0 in CharVocab) or max_new tokens.
std::vector<Token> generate(PromptLayout& layout, const BatchPartition* part,
                            const AttentionConfig& cfg, const ModelWeights& w,
                            double temperature, SeededRng& rng, int max_new,
                            int stop_token = 0);

// exp(mean NLL) of the span's tokens under teacher forcing
double perplexity(const PromptLayout& layout, const BatchPartition* part,
                  const AttentionConfig& cfg, const ModelWeights& w, TokenSpan span);
double perplexity_from_logprobs(std::span<const double> logprobs, TokenSpan span);

// one flat teacher-forced pass; ppl of every demonstration response, in order
std::vector<double> response_perplexities(const PromptLayout& layout, const AttentionConfig& cfg,
                                          const ModelWeights& w);

constexpr double kTraceNan = std::numeric_limits<double>::quiet_NaN();

} // namespace ficl
