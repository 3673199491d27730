#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "avic/common.hpp"

namespace avic {

// SplitMix64 finalizer. Every random decision in the project flows through
// this mixer so that runs are reproducible bit-for-bit from a single seed.
inline uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Seed derivation: seed -> tag -> integer qualifiers, each folded through
// mix64. Stage/epoch/batch streams are independent by construction; nothing
// shares a mutable generator across concerns.
inline uint64_t derive_seed(uint64_t seed, std::string_view tag) {
    return mix64(seed ^ hash_str(tag));
}
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a) {
    return mix64(derive_seed(seed, tag) ^ mix64(a + 0x9E3779B97F4A7C15ull));
}
inline uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t a, uint64_t b) {
    return mix64(derive_seed(seed, tag, a) ^ mix64(b + 0x3C6EF372FE94F82Aull));
}

// SplitMix64 counter generator: state advances by the golden-ratio increment,
// outputs are mix64 of the state.
class CounterRng {
public:
    explicit CounterRng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    // [0,1) with 53 random bits
    double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Box-Muller; draws consumed in pairs, second value cached
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_unit();
        double u2 = next_unit();
        double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

template <typename T>
void fill_uniform(std::vector<T>& v, CounterRng& rng, double lo, double hi) {
    for (auto& x : v) x = static_cast<T>(rng.next_uniform(lo, hi));
}

template <typename T>
void fill_normal(std::vector<T>& v, CounterRng& rng) {
    for (auto& x : v) x = static_cast<T>(rng.next_normal());
}

// Fisher-Yates with modulo draws. The slight modulo bias is irrelevant at
// this scale; the exact sequence is part of the reproducibility contract.
inline std::vector<uint32_t> random_permutation(size_t n, CounterRng& rng) {
    std::vector<uint32_t> p(n);
    for (size_t i = 0; i < n; ++i) p[i] = static_cast<uint32_t>(i);
    for (size_t i = n; i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_u64() % i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace avic
