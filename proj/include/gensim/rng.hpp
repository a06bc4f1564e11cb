#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gensim {

/// Engine used everywhere. Streams are bit-reproducible for a given seed.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Child seed for (master, stream, index). Any consumer that parallelizes
/// per-item work derives one child per index so results do not depend on
/// thread count or completion order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(master ^ fnv1a(stream)) + mix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace gensim
