#pragma once
#include <cstdint>

namespace dipanet {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen over <random> engines plus
// distributions because the full generation pipeline is pinned here: the same
// seed yields the same doubles on every platform and standard library.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 significant bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound) by scaling; bound is tiny here so the
    // modulo bias of alternatives is irrelevant, but scaling keeps it exact.
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound));
    }
};

} // namespace dipanet
