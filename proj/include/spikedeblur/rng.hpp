#pragma once

#include <cstdint>

namespace spikedeblur {

// Counter-based generator: a stateless hash of (seed, a, b, c) yields the
// random draw for that coordinate, so results do not depend on iteration
// order or parallel schedule.
namespace rng {

inline std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                  std::uint64_t c) {
    std::uint64_t h = mix(seed ^ 0x243f6a8885a308d3ULL);
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
}

/// Uniform double in [0, 1) from a 64-bit hash.
inline double to_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

inline double uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return to_unit(counter_hash(seed, a, b, c));
}

}  // namespace rng
}  // namespace spikedeblur
