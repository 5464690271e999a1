#include "ficl/partition.hpp"

#include <algorithm>
#include <stdexcept>

namespace ficl {

BatchPartition partition(const PromptLayout& layout, int batch_size) {
    if (batch_size <= 0) {
        throw std::invalid_argument("partition: batch size must be >= 1");
    }
    const int n_demos = layout.demo_count;
    if (n_demos < 1) {
        throw std::invalid_argument("partition: layout has no demonstrations");
    }
    BatchPartition part;
    part.batch_size = batch_size;
    part.batch_count = (n_demos + batch_size - 1) / batch_size;
    part.query_begin = layout.demo_spans.back().end;
    part.token_batch.assign(layout.tokens.size(), -1);
    part.positions.assign(layout.tokens.size(), 0);

    int max_len = 0;
    for (int b = 0; b < part.batch_count; ++b) {
        const int first = b * batch_size + 1;
        const int last = std::min((b + 1) * batch_size, n_demos);
        TokenSpan span{layout.demo_spans[static_cast<size_t>(first - 1)].begin,
                       layout.demo_spans[static_cast<size_t>(last - 1)].end};
        part.batch_spans.push_back(span);
        part.batch_demos.emplace_back(first, last);
        for (int t = span.begin; t < span.end; ++t) {
            part.token_batch[static_cast<size_t>(t)] = b;
            part.positions[static_cast<size_t>(t)] = t - span.begin;
        }
        max_len = std::max(max_len, span.size());
    }
    part.query_position_offset = max_len;
    for (int t = part.query_begin; t < layout.size(); ++t) {
        part.positions[static_cast<size_t>(t)] = part.query_position_offset + (t - part.query_begin);
    }
    return part;
}

std::vector<std::vector<uint8_t>> visibility_matrix(const BatchPartition& part, int n_tokens) {
    std::vector<std::vector<uint8_t>> m(static_cast<size_t>(n_tokens),
                                        std::vector<uint8_t>(static_cast<size_t>(n_tokens), 0));
    for (int key = 0; key < n_tokens; ++key) {
        for (int target = 0; target < n_tokens; ++target) {
            m[static_cast<size_t>(key)][static_cast<size_t>(target)] =
                part.visible(key, target) ? 1 : 0;
        }
    }
    return m;
}

} // namespace ficl
