#pragma once

#include <cstdint>

namespace sofa {

// splitmix64: the counter-based generator behind all synthetic data.
// Fixed here so golden files stay stable across platforms and compilers.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        state += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Unbiased enough for workload synthesis: fixed-point multiply keeps the
    // mapping portable (no modulo, no platform-dependent rejection loops).
    uint64_t bounded(uint64_t bound) {
        if (bound == 0) return 0;
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    // Inclusive integer range.
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(bounded(static_cast<uint64_t>(hi - lo + 1)));
    }

    double unit() {  // [0, 1)
        return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
    }
};

// Derives an independent stream for a named sub-generator.
inline uint64_t substream_seed(uint64_t seed, uint64_t stream_tag) {
    SplitMix64 s(seed ^ (0xA5A5A5A5DEADBEEFULL * (stream_tag + 1)));
    return s.next();
}

}  // namespace sofa
