#pragma once

#include <cstdint>
#include <vector>

namespace pvae {

// Counter-based random streams. A value is a pure function of
// (seed, stream, index), so any draw can be reproduced without replaying
// the draws before it, and distinct streams never share state.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    std::uint64_t bits(std::uint64_t index) const;

    // Uniform in [0, 1), 53 random bits.
    double uniform(std::uint64_t index) const;

    // Standard normal via Box-Muller on the uniform pair (2 * index, 2 * index + 1).
    double normal(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    // Derived stream: same seed, stream keyed by (stream, sub).
    CounterRng substream(std::uint64_t sub) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
};

std::uint64_t mix64(std::uint64_t x);

// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, const CounterRng& rng);

}  // namespace pvae
