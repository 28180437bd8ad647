#ifndef SOFTPATCH_RNG_HPP
#define SOFTPATCH_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace softpatch {

/**
 * SplitMix64 generator with pinned derived distributions so that synthetic
 * data and seeded choices are reproducible byte-for-byte across ports.
 *
 * - next():    state += 0x9E3779B97F4A7C15, then the standard SplitMix64 mix.
 * - uniform(): (next() >> 11) * 2^-53, in [0, 1).
 * - normal():  Box-Muller, one draw per call (the sine branch is discarded):
 *              sqrt(-2 ln(1 - u1)) * cos(2 pi u2).
 * - index(n):  floor(uniform() * n).
 */
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::size_t index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    /// Fisher-Yates, descending swap positions.
    template<typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

private:
    std::uint64_t state_;
};

}

#endif
