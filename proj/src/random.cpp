#include "pvae/random.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace pvae {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t index) const {
    std::uint64_t h = mix64(seed_ ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ stream_);
    return mix64(h ^ index);
}

double CounterRng::uniform(std::uint64_t index) const {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t index) const {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::substream(std::uint64_t sub) const {
    return CounterRng(seed_, mix64(stream_ * 0x100000001b3ULL ^ mix64(sub)));
}

std::vector<std::size_t> permutation(std::size_t n, const CounterRng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bits(i) % i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

}  // namespace pvae
