#include "pvae/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "pvae/errors.hpp"

namespace pvae {

PgmImage tile_images(const Tensor& images, std::size_t rows, std::size_t cols, double max_value) {
    if (images.rank() != 4 || images.dim(1) != 1) throw ContractError("PGM tiles must be [N, 1, H, W] grayscale");
    if (rows * cols != images.dim(0) || rows == 0)
        throw ContractError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " does not hold " +
                            std::to_string(images.dim(0)) + " images");
    const std::size_t h = images.dim(2), w = images.dim(3);
    PgmImage out;
    out.width = cols * w + (cols - 1);
    out.height = rows * h + (rows - 1);
    out.pixels.assign(out.width * out.height, 255);
    for (std::size_t t = 0; t < rows * cols; ++t) {
        const std::size_t r0 = (t / cols) * (h + 1), c0 = (t % cols) * (w + 1);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double v = std::clamp(images[(t * h + y) * w + x] / max_value, 0.0, 1.0);
                out.pixels[(r0 + y) * out.width + c0 + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    }
    return out;
}

std::vector<std::uint8_t> encode_pgm(const PgmImage& image) {
    const std::string header =
        "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

PgmImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    if (token() != "P5") throw FormatError("not a binary PGM");
    PgmImage img;
    try {
        img.width = std::stoul(token());
        img.height = std::stoul(token());
        if (std::stoul(token()) != 255) throw FormatError("PGM maxval must be 255");
    } catch (const std::logic_error&) {
        throw FormatError("malformed PGM header");
    }
    ++pos;  // single whitespace byte before the raster
    if (bytes.size() < pos || bytes.size() - pos != img.width * img.height) throw FormatError("PGM raster size mismatch");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

void write_pgm(const Tensor& images, const std::string& path, std::size_t rows, std::size_t cols, double max_value) {
    const std::vector<std::uint8_t> bytes = encode_pgm(tile_images(images, rows, cols, max_value));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

PgmImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return decode_pgm({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace pvae
