#pragma once

#include "ficl/model.hpp"

namespace ficl {

struct TrainOptions {
    int steps = 200;
    double lr = 0.05;
    int batch = 2;
    double clip_norm = 1.0; // global gradient norm cap
    uint64_t seed = 0;
    double divergence_factor = 10.0;
};

struct TrainStats {
    std::vector<double> step_losses;
    double initial_smoothed = 0.0;
    double final_smoothed = 0.0;
};

// Mean next-token cross-entropy of one flat layout under standard attention;
// gradients accumulate into grad (same tensor shapes as w).
double loss_and_grad(const ModelWeights& w, const PromptLayout& layout, ModelWeights& grad);

// Same objective evaluated through the inference forward pass; the
// finite-difference side of the gradient check goes through here so it stays
// independent of the backward implementation.
double loss_only(const ModelWeights& w, const PromptLayout& layout);

// Plain SGD with gradient clipping. Deterministic given the seed. Throws on
// divergence (loss above divergence_factor x the first step) and, for runs of
// at least 20 steps, when the smoothed loss failed to decrease.
TrainStats train_toy(ModelWeights& w, const std::vector<PromptLayout>& corpus,
                     const TrainOptions& opts);

void zero_grads(ModelWeights& grad);
double grad_global_norm(const ModelWeights& grad);

} // namespace ficl
