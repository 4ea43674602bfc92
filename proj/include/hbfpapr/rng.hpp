#pragma once

/**
 * @file rng.hpp
 * @brief Counter-based random numbers.
 *
 * Every draw is a pure function of (seed, stream, counter), so any symbol,
 * DAC stream or GA candidate can be regenerated in isolation and in any
 * order. The mixing function is the SplitMix64 finalizer.
 */

#include <cmath>
#include <cstdint>

#include "core.hpp"

namespace hbfpapr {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream identifiers, kept distinct so that unrelated consumers never share draws.
enum class RngDomain : std::uint64_t {
    Bits = 1,
    Precoder = 2,
    Genetic = 3,
    Oracle = 4,
    Test = 5,
};

class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(splitmix64(splitmix64(seed) ^ stream)) {}

    CounterRng(std::uint64_t seed, RngDomain domain, std::uint64_t index)
        : CounterRng(seed, splitmix64(static_cast<std::uint64_t>(domain)) ^ splitmix64(index + 0x5bd1e995ULL)) {}

    std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)); }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    /// Circularly-symmetric complex Gaussian with unit variance.
    Complex complex_normal() { return Complex(normal(), normal()) * std::sqrt(0.5); }

    bool bit() { return (next_u64() >> 63) != 0; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace hbfpapr
