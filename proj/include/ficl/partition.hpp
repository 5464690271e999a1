#pragma once

#include "ficl/prompt.hpp"

#include <vector>

namespace ficl {

// T-batch split of the demonstrations of a flat layout. Token order is left
// untouched; only position indices are remapped so each batch is logically
// adjacent to the query block, and visibility makes distinct batches mutually
// invisible while query-side tokens see everything causally.
struct BatchPartition {
    int batch_count = 0; // T
    int batch_size = 0;  // B (last batch may be short)
    std::vector<TokenSpan> batch_spans;
    std::vector<std::pair<int, int>> batch_demos; // [first, last] demo ordinals
    std::vector<int> token_batch;                 // batch per token, -1 = query side
    std::vector<int> positions;                   // remapped, parallel to layout tokens
    int query_begin = 0;           // first query-side token index
    int query_position_offset = 0; // max over batches of batch token length

    // remapped position for any token index, including tokens appended after
    // the partition was built (generation)
    int position_of(int idx) const {
        if (idx < query_begin) {
            return positions[static_cast<size_t>(idx)];
        }
        return query_position_offset + (idx - query_begin);
    }

    int batch_of(int idx) const {
        return idx < query_begin ? token_batch[static_cast<size_t>(idx)] : -1;
    }

    // may token `target` attend to token `key`?
    bool visible(int key, int target) const {
        if (key > target) {
            return false;
        }
        const int bt = batch_of(target);
        if (bt < 0) {
            return true; // query side sees every batch and itself, causally
        }
        return batch_of(key) == bt;
    }
};

// B >= 1 required; B > N degenerates to a single batch. Demonstrations keep
// their original order and consecutive grouping.
BatchPartition partition(const PromptLayout& layout, int batch_size);

// dense (token x token) visibility, row = key, col = target; for tests
std::vector<std::vector<uint8_t>> visibility_matrix(const BatchPartition& part, int n_tokens);

} // namespace ficl
