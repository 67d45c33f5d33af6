#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace odenet {

// All randomness in the project flows through std::mt19937_64 (whose output
// sequence is fixed by the C++ standard) plus the conversions below, which
// are written out so that results do not depend on the standard library's
// distribution implementations.

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return uniform01(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Integer in [0, n). The modulo bias is below 2^-40 for the sizes used here.
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

private:
    std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used as a counter-based hash so per-pixel noise is
/// independent of evaluation order and thread count.
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Standard normal deviate for (seed, index) via Box-Muller.
inline double hashed_normal(std::uint64_t seed, std::uint64_t index) noexcept {
    const std::uint64_t a = splitmix64(seed ^ splitmix64(2 * index));
    const std::uint64_t b = splitmix64(seed ^ splitmix64(2 * index + 1));
    const double u1 = 1.0 - uniform01(a); // (0, 1]
    const double u2 = uniform01(b);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace odenet
