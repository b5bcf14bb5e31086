#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace metares {

/// splitmix64 step; used for seed derivation so results do not depend on
/// std library distribution internals.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Stage seeds are derived from the master seed by hashing (master, counter).
/// Counters are fixed per pipeline stage (see experiment.hpp), so adding a new
/// stage never shifts the streams of existing ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
    return splitmix64(splitmix64(master) ^ splitmix64(counter * 0x9e3779b97f4a7c15ull + 1));
}

/// Uniform integer in [0, n) drawn portably from a std::mt19937_64.
/// Modulo bias is below 2^-53 for the n used here.
inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
    return gen() % n;
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// k distinct indices from [0, n), by partial Fisher-Yates. Order is the
/// draw order, deterministic for a given generator state.
inline std::vector<std::size_t> sample_without_replacement(std::mt19937_64& gen,
                                                           std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k && i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(uniform_index(gen, n - i));
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace metares
