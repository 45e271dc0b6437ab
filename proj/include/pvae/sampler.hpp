#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvae/model.hpp"

namespace pvae {

// Independent seeds for the top latent level, the middle (level-1 map of a
// two-level model) and the pixel stream. Image slot s of a stream draws
// from counter indices [s * size, (s + 1) * size), so every level's noise
// is fixed by its own seed alone.
struct NoiseBundle {
    std::uint64_t top = 0;
    std::uint64_t middle = 0;
    std::uint64_t pixel = 0;

    static NoiseBundle from_seed(std::uint64_t seed);
};

// Which slot of each stream every image uses.
struct NoiseSlots {
    std::vector<std::size_t> top, middle, pixel;
    static NoiseSlots identity(std::size_t n);
};

struct SampleOptions {
    // Evaluate only the rows a pixel's logits can depend on (the last
    // 2 * layers + 1 rows); results are bit-identical to the full pass.
    bool row_cache = false;
};

struct SampleRecord {
    Tensor images;              // [N, C, H, W]
    std::vector<Tensor> latents;  // z_1 .. z_L
    Tensor logits;              // logits used at sampling time, [N, C * classes, H, W]
};

// Ancestral sampling: z_L from the unit Gaussian; for two levels z_1 one
// location at a time in raster order from p(z_1 | z_2); then pixels one at
// a time in raster order, each drawn from its decoder distribution
// (Bernoulli by threshold, 256-way by inverse CDF).
SampleRecord sample_images(const Model& model, std::size_t n, const NoiseBundle& noise,
                           const SampleOptions& options = {});
SampleRecord sample_images(const Model& model, const NoiseBundle& noise, const NoiseSlots& slots,
                           const SampleOptions& options = {});

enum class VaryLevel { none, top, middle, pixel };
VaryLevel parse_vary_level(const std::string& name);  // throws ConfigError

// rows x cols images (row-major) in which only the chosen stream takes a
// fresh slot per image and all others reuse slot 0 of `base`. VaryLevel::none
// gives plain independent samples. middle on a one-level model is a
// ContractError.
SampleRecord sample_vary_level(const Model& model, VaryLevel vary, std::size_t rows, std::size_t cols,
                               const NoiseBundle& base, const SampleOptions& options = {});

}  // namespace pvae
