#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace ficl {

// Deterministic PRNG: xoshiro256** seeded through splitmix64. The draw
// sequence depends only on the seed, never on platform or standard-library
// internals, so experiment runs replay bit-for-bit anywhere.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed);

    uint64_t seed() const { return seed_; }

    uint64_t next_u64();

    // uniform in [0, 1), 53-bit mantissa
    double next_double();

    // uniform integer in [0, n); n must be > 0
    uint64_t next_below(uint64_t n);

    // standard normal, Box-Muller (consumes two uniforms per pair)
    double next_normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_ = 0;
    uint64_t s_[4] = {};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable sub-stream derivation: mixes the master seed with a purpose string
// so adding a new consumer never perturbs existing streams.
uint64_t derive_seed(uint64_t seed, std::string_view purpose);

} // namespace ficl
