#include "pvae/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "pvae/errors.hpp"
#include "pvae/ops.hpp"
#include "pvae/random.hpp"

namespace pvae {

namespace {

// Stream ids within each seed.
constexpr std::uint64_t kPixelStream = 0;

Tensor slot_normals(const Shape& shape, std::uint64_t seed, std::uint64_t level, const std::vector<std::size_t>& slots) {
    const CounterRng rng(seed, level);
    const std::size_t per = shape_numel(shape) / shape[0];
    std::vector<double> v(shape_numel(shape));
    for (std::size_t b = 0; b < shape[0]; ++b)
        for (std::size_t i = 0; i < per; ++i) v[b * per + i] = rng.normal(slots[b] * per + i);
    return Tensor::from(shape, std::move(v));
}

double draw_bernoulli(double logit, double u) {
    const double p = 1.0 / (1.0 + std::exp(-logit));
    return u < p ? 1.0 : 0.0;
}

double draw_categorical(const double* logits, std::size_t stride, double u) {
    double top = logits[0];
    for (std::size_t k = 1; k < 256; ++k) top = std::max(top, logits[k * stride]);
    double p[256];
    double total = 0.0;
    for (std::size_t k = 0; k < 256; ++k) total += p[k] = std::exp(logits[k * stride] - top);
    const double target = u * total;
    double cdf = 0.0;
    for (std::size_t k = 0; k < 256; ++k) {
        cdf += p[k];
        if (target < cdf) return static_cast<double>(k);
    }
    return 255.0;
}

}  // namespace

NoiseBundle NoiseBundle::from_seed(std::uint64_t seed) {
    return {mix64(seed ^ 0x7a11), mix64(seed ^ 0x3e1d), mix64(seed ^ 0x91c5)};
}

NoiseSlots NoiseSlots::identity(std::size_t n) {
    NoiseSlots s;
    for (std::size_t i = 0; i < n; ++i) {
        s.top.push_back(i);
        s.middle.push_back(i);
        s.pixel.push_back(i);
    }
    return s;
}

SampleRecord sample_images(const Model& model, std::size_t n, const NoiseBundle& noise, const SampleOptions& options) {
    return sample_images(model, noise, NoiseSlots::identity(n), options);
}

SampleRecord sample_images(const Model& model, const NoiseBundle& noise, const NoiseSlots& slots,
                           const SampleOptions& options) {
    const NoGradGuard guard;
    const ModelConfig& c = model.config();
    const std::size_t n = slots.pixel.size();
    if (n == 0) throw ContractError("sample_images needs at least one image");
    if (slots.top.size() != n || slots.middle.size() != n) throw ContractError("noise slot lists differ in length");
    const std::size_t L = c.latent_levels();
    SampleRecord rec;

    // Latents, top down.
    if (L >= 1) {
        const DiagGaussianParams top = top_prior(model, n);
        rec.latents.resize(L);
        rec.latents[L - 1] = gaussian_sample(top, slot_normals(top.shape(), noise.top, L, slots.top));
    }
    if (L == 2) {
        const Shape shape = c.latent_shape(1, n);
        const Tensor eps = slot_normals(shape, noise.middle, 1, slots.middle);
        const std::size_t ch = shape[1], h = shape[2], w = shape[3];
        std::vector<double> z(shape_numel(shape), 0.0);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const DiagGaussianParams p = latent_prior_params(model, rec.latents[1], Tensor::from(shape, z));
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t k = 0; k < ch; ++k) {
                        const std::size_t at = ((b * ch + k) * h + i) * w + j;
                        z[at] = p.mu()[at] + std::exp(0.5 * p.logvar()[at]) * eps[at];
                    }
            }
        rec.latents[0] = Tensor::from(shape, std::move(z));
    }

    // Pixels in raster order; channels of one pixel are independent given the past.
    const DecoderContext ctx = decoder_context(model, L > 0 ? rec.latents[0] : Tensor{}, n);
    const std::size_t C = c.channels, H = c.height, W = c.width, K = c.classes();
    // Row i of the stack output depends on teacher rows [i - above, i] and, through the
    // unmasked first-layer view of the decoder features, on feature rows down to i + below.
    // Evaluating exactly that window reproduces the full pass bit-for-bit.
    const std::size_t above = (c.kernel / 2) * c.pixelcnn_layers;
    const std::size_t below = ctx.features.defined() ? c.kernel / 2 : 0;
    const CounterRng pixel_rng(noise.pixel, kPixelStream);
    std::vector<double> canvas(n * C * H * W, 0.0);
    std::vector<double> recorded(n * C * K * H * W, 0.0);
    Tensor cached;  // factorized decoders: one pass serves every pixel
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t row0 = options.row_cache && i > above ? i - above : 0;
            const std::size_t rows = options.row_cache ? std::min(H, i + below + 1) - row0 : H;
            Tensor logits;
            if (c.pixelcnn_layers == 0) {
                if (!cached.defined()) cached = decode_rows(model, Tensor::from(c.image_shape(n), canvas), ctx, 0);
                logits = cached;
            } else {
                Tensor x = Tensor::from(c.image_shape(n), canvas);
                if (rows != H) x = slice_rows(x, row0, rows);
                logits = decode_rows(model, x, ctx, row0);
            }
            const std::size_t lrows = logits.dim(2), li = c.pixelcnn_layers == 0 ? i : i - row0;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < C; ++ch) {
                    const double u = pixel_rng.uniform(((slots.pixel[b] * C + ch) * H + i) * W + j);
                    const std::size_t plane = lrows * W;
                    const double* base = logits.raw() + (b * C * K + ch * K) * plane + li * W + j;
                    for (std::size_t k = 0; k < K; ++k)
                        recorded[((b * C * K + ch * K + k) * H + i) * W + j] = base[k * plane];
                    canvas[((b * C + ch) * H + i) * W + j] =
                        K == 256 ? draw_categorical(base, plane, u) : draw_bernoulli(base[0], u);
                }
        }
    }
    rec.images = Tensor::from(c.image_shape(n), std::move(canvas));
    rec.logits = Tensor::from({n, C * K, H, W}, std::move(recorded));
    return rec;
}

VaryLevel parse_vary_level(const std::string& name) {
    if (name == "none") return VaryLevel::none;
    if (name == "top") return VaryLevel::top;
    if (name == "middle") return VaryLevel::middle;
    if (name == "pixel") return VaryLevel::pixel;
    throw ConfigError("unknown --vary level '" + name + "' (none, top, middle, pixel)");
}

SampleRecord sample_vary_level(const Model& model, VaryLevel vary, std::size_t rows, std::size_t cols,
                               const NoiseBundle& base, const SampleOptions& options) {
    if (rows == 0 || cols == 0) throw ContractError("sample grid must be non-empty");
    if (vary == VaryLevel::middle && model.config().latent_levels() != 2)
        throw ContractError("varying the middle level needs a two-level model");
    const std::size_t n = rows * cols;
    NoiseSlots slots = NoiseSlots::identity(n);
    if (vary != VaryLevel::none) {
        if (vary != VaryLevel::top) std::fill(slots.top.begin(), slots.top.end(), 0);
        if (vary != VaryLevel::middle) std::fill(slots.middle.begin(), slots.middle.end(), 0);
        if (vary != VaryLevel::pixel) std::fill(slots.pixel.begin(), slots.pixel.end(), 0);
    }
    return sample_images(model, base, slots, options);
}

}  // namespace pvae
