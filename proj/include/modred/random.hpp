#pragma once

#include "modred/numkit.hpp"

#include <cstdint>
#include <random>

namespace modred {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; decorrelates streams that share a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Vector standard_normal_vector(Index n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal(rng);
    return v;
}

inline Vector standard_normal_vector(Index n, std::uint64_t seed) {
    Rng rng(seed);
    return standard_normal_vector(n, rng);
}

inline DenseMatrix standard_normal_matrix(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseMatrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
    return M;
}

}  // namespace modred
