#include "pvae/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "pvae/errors.hpp"
#include "pvae/random.hpp"

namespace pvae {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// Whole file, gunzipped when compressed (gzread passes plain files through).
std::vector<std::uint8_t> read_maybe_gz(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int got;
    while ((got = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + got);
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw FormatError("corrupt compressed file: " + path);
    return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

constexpr std::uint64_t kBinarizeStream = 0xb1a7;
constexpr std::uint64_t kToyStream = 0x70e;
constexpr std::uint64_t kShuffleStream = 0x5f1e;

}  // namespace

std::string binarization_name(Binarization b) {
    switch (b) {
        case Binarization::none: return "none";
        case Binarization::fixed_threshold: return "fixed";
        case Binarization::stochastic: return "stochastic";
    }
    return "none";
}

Binarization parse_binarization(const std::string& name) {
    if (name == "none") return Binarization::none;
    if (name == "fixed") return Binarization::fixed_threshold;
    if (name == "stochastic") return Binarization::stochastic;
    throw ConfigError("unknown binarization '" + name + "' (none, fixed, stochastic)");
}

Tensor load_idx(const std::string& path) {
    const std::vector<std::uint8_t> b = read_maybe_gz(path);
    if (b.size() < 16) throw FormatError(path + ": truncated IDX header");
    const std::uint32_t magic = read_be32(b, 0);
    if (magic != kImageMagic) throw FormatError(path + ": not an IDX image file (magic " + std::to_string(magic) + ")");
    const std::size_t n = read_be32(b, 4), rows = read_be32(b, 8), cols = read_be32(b, 12);
    if (n == 0 || rows == 0 || cols == 0) throw FormatError(path + ": empty IDX image file");
    if (b.size() < 16 + n * rows * cols) throw FormatError(path + ": truncated IDX payload");
    std::vector<double> v(n * rows * cols);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = b[16 + i] / 255.0;
    return Tensor::from({n, 1, rows, cols}, std::move(v));
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
    const std::vector<std::uint8_t> b = read_maybe_gz(path);
    if (b.size() < 8) throw FormatError(path + ": truncated IDX header");
    if (read_be32(b, 0) != kLabelMagic) throw FormatError(path + ": not an IDX label file");
    const std::size_t n = read_be32(b, 4);
    if (b.size() < 8 + n) throw FormatError(path + ": truncated IDX payload");
    return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

std::vector<std::uint8_t> encode_idx(const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1) throw ShapeError("encode_idx needs [N, 1, H, W]");
    std::vector<std::uint8_t> b;
    put_be32(b, kImageMagic);
    put_be32(b, static_cast<std::uint32_t>(images.dim(0)));
    put_be32(b, static_cast<std::uint32_t>(images.dim(2)));
    put_be32(b, static_cast<std::uint32_t>(images.dim(3)));
    for (double v : images.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("encode_idx: value outside [0, 1]");
        b.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    return b;
}

void write_idx(const Tensor& images, const std::string& path) {
    const std::vector<std::uint8_t> b = encode_idx(images);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw IoError("write failed: " + path);
}

Dataset binarize(const Tensor& images, Binarization mode, std::uint64_t seed) {
    for (double v : images.data())
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("binarize: value outside [0, 1]");
    Dataset d;
    d.binarization = mode;
    d.binarization_seed = seed;
    if (mode == Binarization::none) {
        d.images = images.detach();
        return d;
    }
    const CounterRng rng(seed, kBinarizeStream);
    std::vector<double> out(images.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = images[i];
        out[i] = mode == Binarization::fixed_threshold ? (v >= 0.5 ? 1.0 : 0.0) : (rng.uniform(i) < v ? 1.0 : 0.0);
    }
    d.images = Tensor::from(images.shape(), std::move(out));
    return d;
}

Dataset make_toy_dataset(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ContractError("make_toy_dataset needs n >= 1");
    constexpr std::size_t S = 8;
    const CounterRng rng(seed, kToyStream);
    std::vector<double> v(n * S * S, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        auto coord = [&](std::size_t j) { return static_cast<std::size_t>(rng.bits(4 * k + j) % S); };
        const std::size_t r0 = coord(0), r1 = coord(1), c0 = coord(2), c1 = coord(3);
        for (std::size_t r = std::min(r0, r1); r <= std::max(r0, r1); ++r)
            for (std::size_t c = std::min(c0, c1); c <= std::max(c0, c1); ++c) v[k * S * S + r * S + c] = 1.0;
    }
    Dataset d;
    d.images = Tensor::from({n, 1, S, S}, std::move(v));
    d.source = "toy";
    d.binarization = Binarization::fixed_threshold;
    d.binarization_seed = seed;
    return d;
}

Dataset take(const Dataset& data, std::size_t count) {
    if (count >= data.count()) return data;
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    Dataset d = data;
    d.images = gather_images(data.images, idx);
    return d;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                  std::uint64_t epoch) {
    if (batch_size == 0) throw ContractError("batch size must be positive");
    const std::vector<std::size_t> perm = permutation(n, CounterRng(shuffle_seed, kShuffleStream).substream(epoch));
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch_size)
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return out;
}

Tensor gather_images(const Tensor& images, const std::vector<std::size_t>& indices) {
    const std::size_t per = images.numel() / images.dim(0);
    std::vector<double> v(indices.size() * per);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= images.dim(0)) throw ContractError("gather_images: index out of range");
        std::copy_n(images.raw() + indices[i] * per, per, v.data() + i * per);
    }
    Shape shape = images.shape();
    shape[0] = indices.size();
    return Tensor::from(std::move(shape), std::move(v));
}

std::vector<Tensor> batch_iter(const Dataset& data, std::size_t batch_size, std::uint64_t shuffle_seed,
                               std::uint64_t epoch) {
    std::vector<Tensor> out;
    for (const auto& idx : batch_order(data.count(), batch_size, shuffle_seed, epoch))
        out.push_back(gather_images(data.images, idx));
    return out;
}

Dataset load_mnist(const std::string& dir, bool train, std::size_t count, Binarization mode, std::uint64_t seed) {
    const std::string stem = dir + "/" + (train ? "train" : "t10k") + "-images-idx3-ubyte";
    const std::string path = std::filesystem::exists(stem) ? stem : stem + ".gz";
    Tensor raw = load_idx(path);
    if (count > 0 && count < raw.dim(0)) {
        std::vector<std::size_t> idx(count);
        for (std::size_t i = 0; i < count; ++i) idx[i] = i;
        raw = gather_images(raw, idx);
    }
    Dataset d = binarize(raw, mode, seed);
    d.source = std::string("mnist-") + (train ? "train" : "test");
    return d;
}

}  // namespace pvae
