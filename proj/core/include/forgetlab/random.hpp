#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace forgetlab {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; used to derive independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of `seed` (teacher draws, student draws, test sets, ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// Fills `out` with i.i.d. draws from N(0, stddev^2).
inline void fill_normal(Rng& rng, std::span<double> out, double stddev = 1.0) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (double& v : out) v = normal(rng);
}

}  // namespace forgetlab
