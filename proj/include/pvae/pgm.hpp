#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvae/tensor.hpp"

namespace pvae {

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

// Tiles a [rows * cols, 1, H, W] batch row-major onto one canvas with
// 1-pixel white (255) separators between tiles. Values are mapped by
// round(clamp(v, 0, 1) * 255) unless `max_value` is 255 (8-bit data).
PgmImage tile_images(const Tensor& images, std::size_t rows, std::size_t cols, double max_value = 1.0);

// Binary "P5" encoding with maxval 255.
std::vector<std::uint8_t> encode_pgm(const PgmImage& image);
PgmImage decode_pgm(const std::vector<std::uint8_t>& bytes);  // throws FormatError

void write_pgm(const Tensor& images, const std::string& path, std::size_t rows, std::size_t cols,
               double max_value = 1.0);
PgmImage read_pgm(const std::string& path);

}  // namespace pvae
