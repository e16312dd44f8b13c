#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fcap {

// Deterministic random number utilities. Everything stochastic in the
// pipeline (init, shuffling, augmentation, dropout, synthesis) derives its
// stream from a master seed through seed_hash(), so results are reproducible
// regardless of evaluation order or prefetch depth.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t seed_hash(std::uint64_t a) { return splitmix64(a); }

inline std::uint64_t seed_hash(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ b);
}

inline std::uint64_t seed_hash(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return splitmix64(seed_hash(a, b) ^ c);
}

inline std::uint64_t seed_hash(std::uint64_t a, std::string_view tag) {
    std::uint64_t h = splitmix64(a);
    for (char ch : tag) h = splitmix64(h ^ static_cast<std::uint8_t>(ch));
    return h;
}

inline std::uint64_t seed_hash(std::uint64_t a, std::string_view tag, std::uint64_t b) {
    return splitmix64(seed_hash(a, tag) ^ b);
}

inline std::uint64_t seed_hash(std::uint64_t a, std::string_view tag, std::uint64_t b,
                               std::uint64_t c) {
    return splitmix64(seed_hash(a, tag, b) ^ c);
}

// PCG32: small, fast, reproducible across platforms and standard libraries
// (std::uniform_real_distribution is not portable across stdlibs).
class Pcg32 {
public:
    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbull) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += splitmix64(seed);
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ull + inc_;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in [0, 1) with 24 bits of mantissa.
    float next_float() { return static_cast<float>(next_u32() >> 8) * 0x1.0p-24f; }

    // Uniform in [0, 1) with 53 bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, bound).
    std::uint32_t next_below(std::uint32_t bound) {
        std::uint32_t threshold = (-bound) % bound;
        for (;;) {
            std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal via Box-Muller; the spare value is cached so the
    // sequence is a pure function of the seed.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 1e-300);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_ = 0;
    std::uint64_t inc_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace fcap
