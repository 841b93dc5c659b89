#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mhx {

/// splitmix64 step; used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Engine with one full state pass discarded: the first outputs of a freshly
/// seeded mt19937_64 are visibly correlated across consecutive derived seeds.
inline std::mt19937_64 seeded_rng(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    rng.discard(312);
    return rng;
}

/// Uniform integer in [0, bound); bound > 0. Modulo bias is irrelevant here,
/// determinism across standard libraries is not.
inline std::size_t bounded_rand(std::mt19937_64& rng, std::size_t bound) {
    return static_cast<std::size_t>(rng() % bound);
}

/// Uniform double in [0, 1) with 53 bits.
inline double unit_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates with an explicit draw so results do not depend on the
/// standard library's std::shuffle implementation.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = bounded_rand(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

/// Draws an index from a discrete distribution given non-negative weights
/// summing to ~1.
inline std::size_t discrete_draw(std::mt19937_64& rng, const std::vector<double>& probs) {
    const double u = unit_real(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
}

} // namespace mhx
