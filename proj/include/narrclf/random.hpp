#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace narrclf {

// std::uniform_*_distribution output is implementation-defined, so every
// seeded draw in the library goes through these helpers on top of
// std::mt19937_64, whose sequence is fixed by the standard.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

// Uniform integer in [0, bound) by rejection sampling.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = Rng::max() - (Rng::max() % bound);
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw >= limit);
    return draw % bound;
}

// Uniform real in [0, 1) from the top 53 bits.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace narrclf
