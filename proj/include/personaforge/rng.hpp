#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace personaforge {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Derive an independent child seed from a parent seed and a tag, so that
/// pipeline stages and parallel workers draw from non-overlapping streams.
inline uint64_t derive_seed(uint64_t parent, std::string_view tag, uint64_t index = 0) {
    return splitmix64(parent ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

/// Seeded RNG used everywhere randomness is needed. Wraps mt19937 so that a
/// given (seed, call sequence) always reproduces the same draws.
class Rng {
public:
    explicit Rng(uint64_t seed)
        : engine_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    /// Uniform index in [0, n).
    size_t index(size_t n) {
        return std::uniform_int_distribution<size_t>(0, n - 1)(engine_);
    }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform() < p;
    }

    uint64_t next_u64() {
        return (static_cast<uint64_t>(engine_()) << 32) | engine_();
    }

    std::mt19937& engine() { return engine_; }

private:
    std::mt19937 engine_;
};

}  // namespace personaforge
