#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace hyperimage {

// splitmix64 finalizer. Used to derive child seeds for parallel and
// per-sample work so that results never depend on scheduling.
inline std::uint64_t hash_mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return hash_mix(seed ^ hash_mix(value));
}

// Deterministic random source. mt19937_64 is fully specified by the
// standard and all derived draws below avoid std::*_distribution, whose
// output is implementation-defined; streams are therefore identical
// across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform integer in [lo, hi], inclusive, rejection-sampled
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        const std::uint64_t span = hi - lo + 1;
        if (span == 0) return next_u64();  // full range
        const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
        const std::uint64_t limit = max - max % span;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return lo + x % span;
    }

    bool coin() { return (next_u64() & 1ull) != 0; }

    // standard normal via Box-Muller
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(0, i - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace hyperimage
