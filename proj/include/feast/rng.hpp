#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <random>

namespace feast {

// Deterministic random source. All draws go through hand-rolled transforms on
// top of mt19937_64 so that streams are reproducible across standard library
// implementations (std::*_distribution is not pinned by the standard).
// State round-trips exactly through serialize()/deserialize().
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound) via rejection on the top of the range.
    int uniform_int(int bound);

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; a fresh pair is drawn every call and the
    // second value is discarded, so no hidden cache enters the state.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // k distinct values from {0..n-1}, order random (partial Fisher-Yates).
    std::vector<int> sample_without_replacement(int n, int k);

    void shuffle(std::vector<int>& v);

    std::string serialize() const;
    void deserialize(const std::string& text);

    // Derives an independent stream id from parts (splitmix64 over the concat).
    static uint64_t mix(uint64_t a, uint64_t b);
    static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }

private:
    std::mt19937_64 engine_;
};

}  // namespace feast
