#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace annbias {

// SplitMix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

// mt19937_64 plus hand-rolled distributions. The standard distribution objects
// are implementation-defined, so every draw here is spelled out to keep results
// reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 6.283185307179586476925286766559 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Draws k distinct indices from [0, n) by advancing a partial Fisher-Yates pass
// over a persistent permutation. Each call is a uniform sample without
// replacement; successive calls are independent samples (with replacement
// across calls). The permutation must hold 0..n-1 in some order.
inline void sample_without_replacement(Rng& rng, std::vector<std::uint32_t>& perm,
                                       std::size_t k, std::vector<std::uint32_t>& out) {
    const std::size_t n = perm.size();
    out.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.bounded(n - i));
        std::swap(perm[i], perm[j]);
        out[i] = perm[i];
    }
}

}  // namespace annbias
