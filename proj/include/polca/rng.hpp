#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string_view>

namespace polca {

// All randomness in the library flows through std::mt19937_64 plus the
// distribution routines below. std::* distributions are not bit-stable
// across standard library implementations, so we roll our own; the exact
// draw algorithms are documented here and replay depends on them.
using RngEngine = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Derives an independent stream seed from a root seed, a domain label and up
// to three indices. Work items (one guide call, one optimizer call, ...) each
// get their own stream so dispatch order and thread interleaving cannot
// change observable results.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view domain,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t state = root ^ detail::fnv1a64(domain);
    std::uint64_t h = detail::splitmix64(state);
    state ^= a;
    h ^= detail::splitmix64(state);
    state ^= b;
    h ^= detail::splitmix64(state);
    state ^= c;
    h ^= detail::splitmix64(state);
    return h;
}

inline RngEngine make_rng(std::uint64_t seed) { return RngEngine(seed); }

// Unbiased integer in [0, n) by rejection: draw 64-bit words until one falls
// below the largest multiple of n, then reduce modulo n.
inline std::uint64_t uniform_index(RngEngine& rng, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const std::uint64_t max64 = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t overflow = (max64 % n + 1) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t x = rng();
        if (overflow == 0 || x <= max64 - overflow) return x % n;
    }
}

// Uniform double in [0, 1) using the top 53 bits of one draw.
inline double uniform01(RngEngine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in the half-open interval (lo, hi]; lo < hi required.
inline double uniform_open_lo(RngEngine& rng, double lo, double hi) {
    return hi - uniform01(rng) * (hi - lo);
}

// Uniform double in [lo, hi).
inline double uniform_range(RngEngine& rng, double lo, double hi) {
    return lo + uniform01(rng) * (hi - lo);
}

inline bool bernoulli(RngEngine& rng, double p) { return uniform01(rng) < p; }

// Basic Box-Muller transform; one normal deviate per two uniform draws
// (the sine branch is discarded to keep draw counts predictable).
inline double normal(RngEngine& rng, double mean, double sigma) {
    double u1 = 1.0 - uniform01(rng);  // (0, 1]
    double u2 = uniform01(rng);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    return mean + sigma * z;
}

}  // namespace polca
