#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace kcomp {

// Seeded Fisher-Yates shuffle. Deliberately avoids std::shuffle and
// std::uniform_int_distribution, whose outputs are implementation-defined;
// this sequence is reproducible on any conforming standard library.
template <typename T>
void seeded_shuffle(std::vector<T>& values, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(values[i - 1], values[j]);
    }
}

// The permutation seeded_shuffle applies to indices 0..n-1.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    seeded_shuffle(perm, seed);
    return perm;
}

}  // namespace kcomp
