#pragma once

#include "ficl/prompt.hpp"
#include "ficl/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace ficl {

// Contamination-free synthetic task: count occurrences of 'A' across five
// candidate strings over A-Z. Self-validating by construction.
struct CountATask {
    std::array<std::string, 5> candidates;
    int answer = 0;
    std::string query;    // "Candidates: X1 X2 X3 X4 X5"
    std::string response; // decimal count
};

struct CountAGenOptions {
    int len_lo = 3;
    int len_hi = 8;
    // per-character chance of 'A'; boosted above 1/26 so answers spread out
    double a_prob = 0.25;
    // regenerate tasks whose answer exceeds this (-1 = no cap); a cap of 9
    // keeps every rendered demonstration the same token length when lengths
    // are fixed
    int max_answer = -1;
};

int count_a(const CountATask& task);

std::vector<CountATask> gen_counta(SeededRng& rng, int count, const CountAGenOptions& opts = {});

Demo to_demo(const CountATask& task);
std::vector<Demo> to_demos(std::span<const CountATask> tasks);

} // namespace ficl
