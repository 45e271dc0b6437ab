#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvae/tensor.hpp"

namespace pvae {

enum class Binarization { none, fixed_threshold, stochastic };

std::string binarization_name(Binarization b);
Binarization parse_binarization(const std::string& name);  // throws ConfigError

struct Dataset {
    Tensor images;  // [N, C, H, W]
    std::string source;
    Binarization binarization = Binarization::none;
    std::uint64_t binarization_seed = 0;

    std::size_t count() const { return images.defined() ? images.dim(0) : 0; }
};

// IDX image file (magic 0x00000803) as [N, 1, rows, cols] scaled by 1/255.
// Gzip-compressed files are decompressed transparently.
Tensor load_idx(const std::string& path);

// IDX label file (magic 0x00000801).
std::vector<std::uint8_t> load_idx_labels(const std::string& path);

// Raw IDX image bytes for values in [0, 1] (rounded to the nearest 1/255).
std::vector<std::uint8_t> encode_idx(const Tensor& images);
void write_idx(const Tensor& images, const std::string& path);

// fixed_threshold: 1 iff value >= 0.5. stochastic: 1 iff u < value with
// u drawn from the seeded stream at the pixel's flat index. Values outside
// [0, 1] are a ContractError.
Dataset binarize(const Tensor& images, Binarization mode, std::uint64_t seed);

// n binary 8x8 images, each a filled axis-aligned rectangle whose two
// corner coordinates are drawn uniformly per axis.
Dataset make_toy_dataset(std::size_t n, std::uint64_t seed);

// The first `count` images (all when count >= N).
Dataset take(const Dataset& data, std::size_t count);

// Image indices of every batch of one epoch: a permutation keyed by
// (shuffle_seed, epoch), cut into batch_size pieces with a short final batch.
std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                  std::uint64_t epoch);

// Images at the given indices, [indices.size(), C, H, W].
Tensor gather_images(const Tensor& images, const std::vector<std::size_t>& indices);

std::vector<Tensor> batch_iter(const Dataset& data, std::size_t batch_size, std::uint64_t shuffle_seed,
                               std::uint64_t epoch);

// MNIST split from `dir`: train-images-idx3-ubyte[.gz] or t10k-images-idx3-ubyte[.gz].
Dataset load_mnist(const std::string& dir, bool train, std::size_t count, Binarization mode, std::uint64_t seed);

}  // namespace pvae
