// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace loramerge {

// splitmix64 finalizer; the basis for both the sequential streams and the
// counter-based per-entry decisions. Fully specified, so results are
// bit-identical across platforms and thread schedules.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

/// Uniform double in [0,1) from a single counter value.
inline double counter_uniform(std::uint64_t key) {
    return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

/// Sequential deterministic stream for synthetic data generation.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(splitmix64(seed ^ 0x5851f42d4c957f2dull)) {}

    std::uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ull;
        return splitmix64(state);
    }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(uniform()) * (hi - lo);
    }

    /// Standard normal via Box-Muller (first variate only).
    float gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                                  std::cos(2.0 * 3.14159265358979323846 * u2));
    }

    /// Derives an independent stream; tag keeps purposes separated.
    Rng fork(std::uint64_t tag) const { return Rng(hash_mix(state, tag)); }
};

}  // namespace loramerge
