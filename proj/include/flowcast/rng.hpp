#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace flowcast {

// All randomness in the project flows through these helpers. std::shuffle and
// the std distributions are implementation-defined, so we draw directly from
// the engine to keep results reproducible across standard libraries.
using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Independent stream per (seed, tag) pair; used to give every parameter,
// fold and stage its own deterministic stream.
inline Rng seeded_rng(std::uint64_t seed, std::string_view tag = {}) {
    std::uint64_t s = seed ^ (tag.empty() ? 0 : fnv1a(tag));
    // splitmix64 scramble so nearby seeds decorrelate
    s += 0x9e3779b97f4a7c15ull;
    s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ull;
    s = (s ^ (s >> 27)) * 0x94d049bb133111ebull;
    s = s ^ (s >> 31);
    return Rng(s);
}

// Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

// Uniform double in [0, 1) with 53-bit resolution.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_real(rng);
}

// Uniform integer in [lo, hi] inclusive.
inline long long uniform_int(Rng& rng, long long lo, long long hi) {
    return lo + static_cast<long long>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

// Fisher-Yates with our own index draw.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace flowcast
