#include "pvae/nn_ops.hpp"

#include <algorithm>
#include <cmath>

#include "pvae/autograd.hpp"
#include "pvae/errors.hpp"
#include "pvae/ops.hpp"
#include "pvae/random.hpp"
#include "pvae/simd/gemm.hpp"

namespace pvae {

namespace {

struct Tap {
    std::size_t c, ky, kx;
};

// Geometry of a forward cross-correlation from a [in_c, in_h, in_w] plane
// stack to [out_c, out_h, out_w]. Transposed convolution reuses the same
// geometry with the roles of input and output swapped.
struct Geometry {
    std::size_t n = 0;
    std::size_t in_c = 0, in_h = 0, in_w = 0;
    std::size_t out_c = 0, out_h = 0, out_w = 0;
    std::size_t kh = 0, kw = 0, stride = 1, pad_h = 0, pad_w = 0;

    std::size_t in_plane() const { return in_h * in_w; }
    std::size_t out_plane() const { return out_h * out_w; }
};

class ConvEngine {
public:
    ConvEngine(Geometry g, std::vector<Tap> taps) : g_(g), taps_(std::move(taps)) {
        pointwise_ = g_.kh == 1 && g_.kw == 1 && g_.stride == 1 && g_.pad_h == 0 && g_.pad_w == 0 &&
                     taps_.size() == g_.in_c;
    }

    std::size_t k() const { return taps_.size(); }

    // Wa[out_c x K] from a [out_c, in_c, kh, kw] weight tensor.
    std::vector<double> gather(const double* w) const {
        const std::size_t kk = k();
        std::vector<double> wa(g_.out_c * kk);
        for (std::size_t o = 0; o < g_.out_c; ++o)
            for (std::size_t t = 0; t < kk; ++t) {
                const Tap& tp = taps_[t];
                wa[o * kk + t] = w[((o * g_.in_c + tp.c) * g_.kh + tp.ky) * g_.kw + tp.kx];
            }
        return wa;
    }

    void scatter_add(const std::vector<double>& dwa_t, double* dw) const {
        // dwa_t is [K x out_c]
        const std::size_t kk = k();
        for (std::size_t t = 0; t < kk; ++t) {
            const Tap& tp = taps_[t];
            for (std::size_t o = 0; o < g_.out_c; ++o)
                dw[((o * g_.in_c + tp.c) * g_.kh + tp.ky) * g_.kw + tp.kx] += dwa_t[t * g_.out_c + o];
        }
    }

    // col[K x out_plane] from one input image [in_c, in_h, in_w].
    const double* im2col(const double* x, std::vector<double>& col) const {
        if (pointwise_) return x;
        const std::size_t p = g_.out_plane();
        col.assign(k() * p, 0.0);
        for (std::size_t t = 0; t < k(); ++t) {
            const Tap& tp = taps_[t];
            const double* plane = x + tp.c * g_.in_plane();
            double* row = col.data() + t * p;
            for (std::size_t oy = 0; oy < g_.out_h; ++oy) {
                const long iy = static_cast<long>(oy * g_.stride + tp.ky) - static_cast<long>(g_.pad_h);
                if (iy < 0 || iy >= static_cast<long>(g_.in_h)) continue;
                const double* src = plane + static_cast<std::size_t>(iy) * g_.in_w;
                double* dst = row + oy * g_.out_w;
                for (std::size_t ox = 0; ox < g_.out_w; ++ox) {
                    const long ix = static_cast<long>(ox * g_.stride + tp.kx) - static_cast<long>(g_.pad_w);
                    if (ix >= 0 && ix < static_cast<long>(g_.in_w)) dst[ox] = src[ix];
                }
            }
        }
        return col.data();
    }

    // Accumulate col[K x out_plane] back onto an input-shaped gradient.
    void col2im(const double* col, double* dx) const {
        const std::size_t p = g_.out_plane();
        if (pointwise_) {
            for (std::size_t i = 0; i < k() * p; ++i) dx[i] += col[i];
            return;
        }
        for (std::size_t t = 0; t < k(); ++t) {
            const Tap& tp = taps_[t];
            double* plane = dx + tp.c * g_.in_plane();
            const double* row = col + t * p;
            for (std::size_t oy = 0; oy < g_.out_h; ++oy) {
                const long iy = static_cast<long>(oy * g_.stride + tp.ky) - static_cast<long>(g_.pad_h);
                if (iy < 0 || iy >= static_cast<long>(g_.in_h)) continue;
                double* dst = plane + static_cast<std::size_t>(iy) * g_.in_w;
                const double* src = row + oy * g_.out_w;
                for (std::size_t ox = 0; ox < g_.out_w; ++ox) {
                    const long ix = static_cast<long>(ox * g_.stride + tp.kx) - static_cast<long>(g_.pad_w);
                    if (ix >= 0 && ix < static_cast<long>(g_.in_w)) dst[ix] += src[ox];
                }
            }
        }
    }

    // out[N, out_c, out_plane] = conv(x[N, in_c, in_plane])
    void forward(const double* x, const std::vector<double>& wa, double* out) const {
        const std::size_t p = g_.out_plane(), kk = k();
        std::vector<double> col;
        for (std::size_t b = 0; b < g_.n; ++b) {
            const double* c = im2col(x + b * g_.in_c * g_.in_plane(), col);
            simd::gemm(g_.out_c, p, kk, wa.data(), kk, c, p, out + b * g_.out_c * p, p);
        }
    }

    // Given d(out), accumulate d(x) (if dx) and d(Wa)^T [K x out_c] (if dwa_t).
    void backward(const double* x, const std::vector<double>& wa, const double* gout, double* dx,
                  std::vector<double>* dwa_t) const {
        const std::size_t p = g_.out_plane(), kk = k();
        std::vector<double> wa_t;
        if (dx) {
            wa_t.resize(kk * g_.out_c);
            simd::transpose(g_.out_c, kk, wa.data(), kk, wa_t.data(), g_.out_c);
        }
        std::vector<double> col, dcol, go_t;
        for (std::size_t b = 0; b < g_.n; ++b) {
            const double* go = gout + b * g_.out_c * p;
            if (dwa_t) {
                const double* c = im2col(x + b * g_.in_c * g_.in_plane(), col);
                go_t.resize(p * g_.out_c);
                simd::transpose(g_.out_c, p, go, p, go_t.data(), g_.out_c);
                simd::gemm(kk, g_.out_c, p, c, p, go_t.data(), g_.out_c, dwa_t->data(), g_.out_c);
            }
            if (dx) {
                dcol.assign(kk * p, 0.0);
                simd::gemm(kk, p, g_.out_c, wa_t.data(), g_.out_c, go, p, dcol.data(), p);
                col2im(dcol.data(), dx + b * g_.in_c * g_.in_plane());
            }
        }
    }

    // Adjoint application: out[N, in_c, in_plane] += conv^T(y[N, out_c, out_plane]).
    void adjoint(const double* y, const std::vector<double>& wa, double* out) const {
        const std::size_t p = g_.out_plane(), kk = k();
        std::vector<double> wa_t(kk * g_.out_c);
        simd::transpose(g_.out_c, kk, wa.data(), kk, wa_t.data(), g_.out_c);
        std::vector<double> dcol;
        for (std::size_t b = 0; b < g_.n; ++b) {
            dcol.assign(kk * p, 0.0);
            simd::gemm(kk, p, g_.out_c, wa_t.data(), g_.out_c, y + b * g_.out_c * p, p, dcol.data(), p);
            col2im(dcol.data(), out + b * g_.in_c * g_.in_plane());
        }
    }

    const Geometry& geometry() const { return g_; }

private:
    Geometry g_;
    std::vector<Tap> taps_;
    bool pointwise_ = false;
};

std::vector<Tap> all_taps(std::size_t channels, std::size_t kh, std::size_t kw) {
    std::vector<Tap> taps;
    taps.reserve(channels * kh * kw);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < kh; ++y)
            for (std::size_t x = 0; x < kw; ++x) taps.push_back({c, y, x});
    return taps;
}

void add_bias(double* out, const Tensor& bias, std::size_t n, std::size_t c, std::size_t plane) {
    if (!bias.defined()) return;
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* o = out + (b * c + ch) * plane;
            const double v = bias[ch];
            for (std::size_t i = 0; i < plane; ++i) o[i] += v;
        }
}

void bias_grad(double* gb, const double* go, std::size_t n, std::size_t c, std::size_t plane) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* g = go + (b * c + ch) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += g[i];
            gb[ch] += acc;
        }
}

void check_bias(const Tensor& bias, std::size_t channels, const char* op) {
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != channels))
        throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias.shape()) + ", expected [" +
                         std::to_string(channels) + "]");
}

Tensor run_conv(const Tensor& input, const ConvEngine& engine, const Tensor& weights, const Tensor& bias) {
    const Geometry& g = engine.geometry();
    const std::vector<double> wa = engine.gather(weights.raw());
    std::vector<double> out(g.n * g.out_c * g.out_plane(), 0.0);
    engine.forward(input.raw(), wa, out.data());
    add_bias(out.data(), bias, g.n, g.out_c, g.out_plane());
    Tensor xv = input.detach();
    return Tensor::make_result(
        {g.n, g.out_c, g.out_h, g.out_w}, std::move(out), {&input, &weights, &bias},
        [engine, xv, wa](detail::Node& self) {
            const Geometry& g = engine.geometry();
            double* dx = self.input_grad(0);
            double* dw = self.input_grad(1);
            std::vector<double> dwa_t;
            if (dw) dwa_t.assign(engine.k() * g.out_c, 0.0);
            engine.backward(xv.raw(), wa, self.grad.data(), dx, dw ? &dwa_t : nullptr);
            if (dw) engine.scatter_add(dwa_t, dw);
            if (double* gb = self.input_grad(2)) bias_grad(gb, self.grad.data(), g.n, g.out_c, g.out_plane());
        });
}

bool is_odd(std::size_t v) { return v % 2 == 1; }

}  // namespace

std::size_t ConvSpec::output_size(std::size_t in, std::size_t kernel) const {
    if (stride == 0) throw ShapeError("conv stride must be positive");
    const long span = static_cast<long>(in + 2 * padding) - static_cast<long>(kernel);
    if (span < 0) throw ShapeError("conv kernel larger than padded input");
    return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t ConvSpec::transposed_output_size(std::size_t in, std::size_t kernel) const {
    const long size = static_cast<long>((in - 1) * stride + kernel) - static_cast<long>(2 * padding);
    if (size < 1) throw ShapeError("transposed conv output size < 1");
    return static_cast<std::size_t>(size);
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 4 || input.dim(1) != spec.in_channels)
        throw ShapeError("conv2d: input " + shape_str(input.shape()) + " vs in_channels " +
                         std::to_string(spec.in_channels));
    const Shape want{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
    if (weights.shape() != want)
        throw ShapeError("conv2d: weights " + shape_str(weights.shape()) + ", expected " + shape_str(want));
    check_bias(bias, spec.out_channels, "conv2d");
    Geometry g;
    g.n = input.dim(0);
    g.in_c = spec.in_channels;
    g.in_h = input.dim(2);
    g.in_w = input.dim(3);
    g.out_c = spec.out_channels;
    g.kh = spec.kernel_h;
    g.kw = spec.kernel_w;
    g.stride = spec.stride;
    g.pad_h = g.pad_w = spec.padding;
    g.out_h = spec.output_size(g.in_h, g.kh);
    g.out_w = spec.output_size(g.in_w, g.kw);
    return run_conv(input, ConvEngine(g, all_taps(g.in_c, g.kh, g.kw)), weights, bias);
}

Tensor conv2d_transposed(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 4 || input.dim(1) != spec.in_channels)
        throw ShapeError("conv2d_transposed: input " + shape_str(input.shape()) + " vs in_channels " +
                         std::to_string(spec.in_channels));
    const Shape want{spec.in_channels, spec.out_channels, spec.kernel_h, spec.kernel_w};
    if (weights.shape() != want)
        throw ShapeError("conv2d_transposed: weights " + shape_str(weights.shape()) + ", expected " +
                         shape_str(want));
    check_bias(bias, spec.out_channels, "conv2d_transposed");
    // Geometry of the forward conv this operation is the adjoint of.
    Geometry g;
    g.n = input.dim(0);
    g.out_c = spec.in_channels;
    g.out_h = input.dim(2);
    g.out_w = input.dim(3);
    g.in_c = spec.out_channels;
    g.kh = spec.kernel_h;
    g.kw = spec.kernel_w;
    g.stride = spec.stride;
    g.pad_h = g.pad_w = spec.padding;
    g.in_h = spec.transposed_output_size(g.out_h, g.kh);
    g.in_w = spec.transposed_output_size(g.out_w, g.kw);
    const ConvEngine engine(g, all_taps(g.in_c, g.kh, g.kw));
    const std::vector<double> wa = engine.gather(weights.raw());
    std::vector<double> out(g.n * g.in_c * g.in_plane(), 0.0);
    engine.adjoint(input.raw(), wa, out.data());
    add_bias(out.data(), bias, g.n, g.in_c, g.in_plane());
    Tensor yv = input.detach();
    return Tensor::make_result(
        {g.n, g.in_c, g.in_h, g.in_w}, std::move(out), {&input, &weights, &bias},
        [engine, yv, wa](detail::Node& self) {
            const Geometry& g = engine.geometry();
            const double* go = self.grad.data();
            double* dy = self.input_grad(0);
            double* dw = self.input_grad(1);
            const std::size_t p = g.out_plane(), kk = engine.k();
            std::vector<double> col, dwa_t;
            if (dw) dwa_t.assign(kk * g.out_c, 0.0);
            std::vector<double> y_t;
            for (std::size_t b = 0; b < g.n; ++b) {
                const double* c = engine.im2col(go + b * g.in_c * g.in_plane(), col);
                if (dy) simd::gemm(g.out_c, p, kk, wa.data(), kk, c, p, dy + b * g.out_c * p, p);
                if (dw) {
                    y_t.resize(p * g.out_c);
                    simd::transpose(g.out_c, p, yv.raw() + b * g.out_c * p, p, y_t.data(), g.out_c);
                    simd::gemm(kk, g.out_c, p, c, p, y_t.data(), g.out_c, dwa_t.data(), g.out_c);
                }
            }
            if (dw) engine.scatter_add(dwa_t, dw);
            if (double* gb = self.input_grad(2)) bias_grad(gb, go, g.n, g.in_c, g.in_plane());
        });
}

Tensor build_mask(const MaskSpec& spec) {
    if (spec.kernel_h == 0 || spec.kernel_w == 0 || !is_odd(spec.kernel_h) || !is_odd(spec.kernel_w))
        throw ShapeError("build_mask: kernel sizes must be odd and positive");
    const std::size_t cy = spec.kernel_h / 2, cx = spec.kernel_w / 2;
    const bool keep_center = spec.kind == MaskKind::B;
    std::vector<double> m(spec.kernel_h * spec.kernel_w, 0.0);
    for (std::size_t y = 0; y < spec.kernel_h; ++y)
        for (std::size_t x = 0; x < spec.kernel_w; ++x) {
            bool on = false;
            switch (spec.stack) {
                case MaskStack::single:
                    on = y < cy || (y == cy && (x < cx || (keep_center && x == cx)));
                    break;
                case MaskStack::vertical:
                    on = y < cy || (keep_center && y == cy);
                    break;
                case MaskStack::horizontal:
                    on = y == cy && (x < cx || (keep_center && x == cx));
                    break;
            }
            m[y * spec.kernel_w + x] = on ? 1.0 : 0.0;
        }
    return Tensor::from({spec.kernel_h, spec.kernel_w}, std::move(m));
}

Tensor masked_conv2d(const Tensor& input, const MaskSpec& mask, const ConvSpec& conv,
                     const Tensor& weights, const Tensor& bias) {
    if (conv.stride != 1) throw ContractError("masked_conv2d requires stride 1");
    if (conv.kernel_h != mask.kernel_h || conv.kernel_w != mask.kernel_w)
        throw ShapeError("masked_conv2d: mask and conv kernel sizes differ");
    const std::size_t pad_h = conv.kernel_h / 2, pad_w = conv.kernel_w / 2;
    if (conv.padding != std::max(pad_h, pad_w))
        throw ContractError("masked_conv2d requires shape-preserving padding (kernel / 2)");
    if (input.rank() != 4 || input.dim(1) != conv.in_channels)
        throw ShapeError("masked_conv2d: input " + shape_str(input.shape()) + " vs in_channels " +
                         std::to_string(conv.in_channels));
    const Shape want{conv.out_channels, conv.in_channels, conv.kernel_h, conv.kernel_w};
    if (weights.shape() != want)
        throw ShapeError("masked_conv2d: weights " + shape_str(weights.shape()) + ", expected " + shape_str(want));
    if (mask.unmasked_channels > conv.in_channels)
        throw ShapeError("masked_conv2d: more unmasked channels than inputs");
    check_bias(bias, conv.out_channels, "masked_conv2d");
    const Tensor m = build_mask(mask);
    std::vector<Tap> taps;
    for (std::size_t c = 0; c < conv.in_channels; ++c)
        for (std::size_t y = 0; y < conv.kernel_h; ++y)
            for (std::size_t x = 0; x < conv.kernel_w; ++x)
                if (c < mask.unmasked_channels || m[y * conv.kernel_w + x] != 0.0) taps.push_back({c, y, x});

    Geometry g;
    g.n = input.dim(0);
    g.in_c = conv.in_channels;
    g.in_h = input.dim(2);
    g.in_w = input.dim(3);
    g.out_c = conv.out_channels;
    g.out_h = g.in_h;
    g.out_w = g.in_w;
    g.kh = conv.kernel_h;
    g.kw = conv.kernel_w;
    g.stride = 1;
    g.pad_h = pad_h;
    g.pad_w = pad_w;
    return run_conv(input, ConvEngine(g, std::move(taps)), weights, bias);
}

Tensor gated_activation(const Tensor& preact, const Tensor& condition) {
    if (preact.rank() != 4 || preact.dim(1) % 2 != 0)
        throw ShapeError("gated_activation: preactivation needs an even channel count, got " +
                         shape_str(preact.shape()));
    const std::size_t n = preact.dim(0), c2 = preact.dim(1), c = c2 / 2;
    const std::size_t plane = preact.dim(2) * preact.dim(3);
    bool spatial_cond = false;
    if (condition.defined()) {
        if (condition.shape() == preact.shape()) {
            spatial_cond = true;
        } else if (!(condition.rank() == 2 && condition.dim(0) == n && condition.dim(1) == c2)) {
            throw ShapeError("gated_activation: condition " + shape_str(condition.shape()) +
                             " does not split into the 2C channels of " + shape_str(preact.shape()));
        }
    }
    const bool has_cond = condition.defined();
    auto cond_at = [&](std::size_t b, std::size_t ch, std::size_t i) {
        if (!has_cond) return 0.0;
        return spatial_cond ? condition[(b * c2 + ch) * plane + i] : condition[b * c2 + ch];
    };
    std::vector<double> out(n * c * plane), tan_v(n * c * plane), sig_v(n * c * plane);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < plane; ++i) {
                const double a = preact[(b * c2 + ch) * plane + i] + cond_at(b, ch, i);
                const double s = preact[(b * c2 + c + ch) * plane + i] + cond_at(b, c + ch, i);
                const std::size_t o = (b * c + ch) * plane + i;
                tan_v[o] = std::tanh(a);
                sig_v[o] = s >= 0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
                out[o] = tan_v[o] * sig_v[o];
            }
    return Tensor::make_result(
        {n, c, preact.dim(2), preact.dim(3)}, std::move(out), {&preact, &condition},
        [n, c, c2, plane, spatial_cond, tan_v = std::move(tan_v), sig_v = std::move(sig_v)](detail::Node& self) {
            double* gp = self.input_grad(0);
            double* gc = self.input_grad(1);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < plane; ++i) {
                        const std::size_t o = (b * c + ch) * plane + i;
                        const double go = self.grad[o];
                        const double t = tan_v[o], s = sig_v[o];
                        const double da = go * (1.0 - t * t) * s;
                        const double ds = go * t * s * (1.0 - s);
                        if (gp) {
                            gp[(b * c2 + ch) * plane + i] += da;
                            gp[(b * c2 + c + ch) * plane + i] += ds;
                        }
                        if (gc) {
                            if (spatial_cond) {
                                gc[(b * c2 + ch) * plane + i] += da;
                                gc[(b * c2 + c + ch) * plane + i] += ds;
                            } else {
                                gc[b * c2 + ch] += da;
                                gc[b * c2 + c + ch] += ds;
                            }
                        }
                    }
        });
}

Tensor gated_block(const Tensor& features, const Tensor& condition, const GatedBlockParams& params) {
    switch (params.kind) {
        case ConditionKind::none:
            return gated_activation(features, Tensor{});
        case ConditionKind::spatial: {
            if (!condition.defined()) throw ShapeError("gated_block: spatial conditioning needs a feature map");
            ConvSpec spec{condition.dim(1), params.weight.dim(0), 1, 1, 1, 0};
            return gated_activation(features, conv2d(condition, spec, params.weight, params.bias));
        }
        case ConditionKind::linear: {
            if (!condition.defined()) throw ShapeError("gated_block: linear conditioning needs a latent vector");
            const Tensor flat = condition.reshape({condition.dim(0), condition.numel() / condition.dim(0)});
            return gated_activation(features, linear(flat, params.weight, params.bias));
        }
    }
    return gated_activation(features, Tensor{});
}

namespace {

std::uint64_t name_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

const Tensor& ParameterStore::add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    if (!value.tracked()) value = value.clone().as_leaf();
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(value));
    return entries_.back().second;
}

const Tensor& ParameterStore::add_weight(const std::string& name, Shape shape, std::size_t fan_in,
                                         std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    const CounterRng rng(seed_, name_hash(name));
    std::vector<double> v(shape_numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (2.0 * rng.uniform(i) - 1.0) * limit;
    return add(name, Tensor::parameter(std::move(shape), std::move(v)));
}

const Tensor& ParameterStore::add_zeros(const std::string& name, Shape shape) {
    const std::size_t n = shape_numel(shape);
    return add(name, Tensor::parameter(std::move(shape), std::vector<double>(n, 0.0)));
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

MaskedStack::MaskedStack(const MaskedStackConfig& config, ParameterStore& store, const std::string& prefix)
    : config_(config) {
    if (config.layers == 0) throw ConfigError("masked stack needs at least one layer");
    if (config.kernel % 2 == 0) throw ConfigError("masked stack kernel must be odd");
    const std::size_t k = config.kernel, w = config.width;
    const std::size_t g = config.activation == Activation::gated ? 2 : 1;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string p = prefix + "l" + std::to_string(l) + ".";
        const std::size_t cin = l == 0 ? config.cond_channels + config.input_channels : w;
        Layer layer;
        layer.v_w = store.add_weight(p + "v_w", {g * w, cin, k, k}, cin * k * k, g * w * k * k);
        layer.v_b = store.add_zeros(p + "v_b", {g * w});
        layer.h_w = store.add_weight(p + "h_w", {g * w, cin, 1, k}, cin * k, g * w * k);
        layer.h_b = store.add_zeros(p + "h_b", {g * w});
        layer.link_w = store.add_weight(p + "link_w", {g * w, g * w, 1, 1}, g * w, g * w);
        layer.link_b = store.add_zeros(p + "link_b", {g * w});
        layer.out_w = store.add_weight(p + "out_w", {w, w, 1, 1}, w, w);
        layer.out_b = store.add_zeros(p + "out_b", {w});
        if (g == 2 && config.condition != ConditionKind::none) {
            for (auto* gate : {&layer.v_gate, &layer.h_gate}) {
                const std::string gp = p + (gate == &layer.v_gate ? "v_cond" : "h_cond");
                gate->kind = config.condition;
                if (config.condition == ConditionKind::spatial)
                    gate->weight = store.add_weight(gp + "_w", {2 * w, config.condition_dim, 1, 1},
                                                    config.condition_dim, 2 * w);
                else
                    gate->weight = store.add_weight(gp + "_w", {2 * w, config.condition_dim},
                                                    config.condition_dim, 2 * w);
                gate->bias = store.add_zeros(gp + "_b", {2 * w});
            }
        }
        layers_.push_back(std::move(layer));
    }
}

Tensor MaskedStack::forward(const Tensor& x, const Tensor& features, const Tensor& condition) const {
    if (layers_.empty()) throw ContractError("masked stack has no layers");
    if (x.rank() != 4 || x.dim(1) != config_.input_channels)
        throw ShapeError("masked stack input " + shape_str(x.shape()));
    const std::size_t k = config_.kernel, w = config_.width;
    const std::size_t g = config_.activation == Activation::gated ? 2 : 1;
    Tensor input = x;
    if (config_.cond_channels > 0) {
        if (!features.defined() || features.dim(1) != config_.cond_channels)
            throw ShapeError("masked stack expects " + std::to_string(config_.cond_channels) + " feature channels");
        input = concat_channels({features, x});
    }
    Tensor v = input, h = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const bool first = l == 0;
        const std::size_t cin = first ? config_.cond_channels + config_.input_channels : w;
        const MaskKind kind = first ? MaskKind::A : MaskKind::B;
        const std::size_t unmasked = first ? config_.cond_channels : 0;
        const Tensor v_pre = masked_conv2d(v, MaskSpec{kind, k, k, MaskStack::vertical, unmasked},
                                           ConvSpec{cin, g * w, k, k, 1, k / 2}, layer.v_w, layer.v_b);
        Tensor h_pre = masked_conv2d(h, MaskSpec{kind, 1, k, MaskStack::horizontal, unmasked},
                                     ConvSpec{cin, g * w, 1, k, 1, k / 2}, layer.h_w, layer.h_b);
        h_pre = add(h_pre, conv2d(v_pre, ConvSpec{g * w, g * w, 1, 1, 1, 0}, layer.link_w, layer.link_b));
        Tensor v_act, h_act;
        if (g == 2) {
            v_act = gated_block(v_pre, condition, layer.v_gate);
            h_act = gated_block(h_pre, condition, layer.h_gate);
        } else {
            v_act = relu(v_pre);
            h_act = relu(h_pre);
        }
        Tensor h_out = conv2d(h_act, ConvSpec{w, w, 1, 1, 1, 0}, layer.out_w, layer.out_b);
        if (!first) h_out = add(h_out, h);
        v = v_act;
        h = h_out;
    }
    return h;
}

std::set<std::pair<std::size_t, std::size_t>> receptive_field_probe(
    const std::function<Tensor(const Tensor&)>& network, std::size_t height, std::size_t width,
    std::size_t target_row, std::size_t target_col, std::uint64_t seed) {
    const CounterRng rng(seed, 0x9e0be);
    std::vector<double> v(height * width);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(i);
    const Tensor x = Tensor::from({1, 1, height, width}, std::move(v)).as_leaf();
    const Tensor logits = network(x);
    std::vector<double> pick(logits.numel(), 0.0);
    pick.at(target_row * width + target_col) = 1.0;
    const Tensor selected = sum(mul(logits, Tensor::from(logits.shape(), std::move(pick))));
    std::set<std::pair<std::size_t, std::size_t>> result;
    if (!selected.tracked()) return result;
    const GradientMap grads = backward(selected);
    const Tensor* g = grads.find(x);
    if (!g) return result;
    for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j)
            if (std::abs((*g)[i * width + j]) > 1e-12) result.insert({i, j});
    return result;
}

}  // namespace pvae
