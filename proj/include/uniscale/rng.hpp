// Counter-based deterministic RNG. Every consumer derives its own substream
// from (seed, stream id), so per-request / per-record work can run in any
// order or in parallel and still reproduce the serial output bit for bit.
// All distributions are implemented here rather than taken from <random>,
// whose distribution outputs are implementation-defined.
#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace uniscale {

// SplitMix64 finalizer. Bijective on 64-bit values.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix64(seed)) {}

    // Substream constructor: independent stream per (seed, stream_id).
    Rng(uint64_t seed, uint64_t stream_id)
        : state_(mix64(mix64(seed) ^ mix64(stream_id + 0x632be59bd9b4e019ull))) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Rejection sampling, unbiased.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) {
        return next_double() < p;
    }

    // Standard normal via Box-Muller. One value per call; the pair's second
    // member is discarded to keep consumption patterns obvious.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // Truncated normal in [-2s, 2s], rejection.
    double truncated_normal(double stddev) {
        for (;;) {
            double v = normal() * stddev;
            if (v >= -2.0 * stddev && v <= 2.0 * stddev) return v;
        }
    }

    // k distinct values from [0, n), by uniform draws with rejection of
    // duplicates. Result order is draw order. Requires k <= n.
    std::vector<uint64_t> sample_distinct(uint64_t n, uint64_t k);

private:
    uint64_t state_;
};

inline std::vector<uint64_t> Rng::sample_distinct(uint64_t n, uint64_t k) {
    std::vector<uint64_t> out;
    out.reserve(k);
    std::vector<bool> used(n, false);
    while (out.size() < k) {
        uint64_t j = below(n);
        if (!used[j]) {
            used[j] = true;
            out.push_back(j);
        }
    }
    return out;
}

}  // namespace uniscale
