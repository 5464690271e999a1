#include "ficl/counta.hpp"

#include <stdexcept>

namespace ficl {

int count_a(const CountATask& task) {
    int n = 0;
    for (const auto& c : task.candidates) {
        for (char ch : c) {
            if (ch == 'A') {
                ++n;
            }
        }
    }
    return n;
}

std::vector<CountATask> gen_counta(SeededRng& rng, int count, const CountAGenOptions& opts) {
    if (count < 1) {
        throw std::invalid_argument("gen_counta: count must be >= 1");
    }
    if (opts.len_lo < 1 || opts.len_hi < opts.len_lo) {
        throw std::invalid_argument("gen_counta: bad length range");
    }
    std::vector<CountATask> tasks;
    tasks.reserve(static_cast<size_t>(count));
    while (static_cast<int>(tasks.size()) < count) {
        CountATask t;
        for (auto& cand : t.candidates) {
            const int len = opts.len_lo +
                            static_cast<int>(rng.next_below(
                                static_cast<uint64_t>(opts.len_hi - opts.len_lo + 1)));
            cand.clear();
            for (int i = 0; i < len; ++i) {
                if (rng.next_double() < opts.a_prob) {
                    cand.push_back('A');
                } else {
                    cand.push_back(static_cast<char>('B' + rng.next_below(25)));
                }
            }
        }
        t.answer = count_a(t);
        if (opts.max_answer >= 0 && t.answer > opts.max_answer) {
            continue; // deterministic rejection, same rng stream
        }
        t.query = "Candidates:";
        for (const auto& cand : t.candidates) {
            t.query.push_back(' ');
            t.query.append(cand);
        }
        t.response = std::to_string(t.answer);
        tasks.push_back(std::move(t));
    }
    return tasks;
}

Demo to_demo(const CountATask& task) {
    return Demo{task.query, task.response};
}

std::vector<Demo> to_demos(std::span<const CountATask> tasks) {
    std::vector<Demo> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks) {
        out.push_back(to_demo(t));
    }
    return out;
}

} // namespace ficl
