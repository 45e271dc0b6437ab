#include "pvae/ops.hpp"

#include <algorithm>
#include <cmath>

#include "pvae/errors.hpp"
#include "pvae/simd/gemm.hpp"

namespace pvae {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// y = f(x) with dy/dx = df(x, y), elementwise.
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
    const std::size_t n = a.numel();
    std::vector<double> out(n);
    const double* x = a.raw();
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i]);
    Tensor result = Tensor::make_result(a.shape(), std::move(out), {&a}, nullptr);
    if (result.tracked()) {
        Tensor xa = a.detach();
        Tensor ya = result.detach();
        result.node()->backward = [xa, ya, df](detail::Node& self) {
            double* g = self.input_grad(0);
            const double* x = xa.raw();
            const double* y = ya.raw();
            for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i] * df(x[i], y[i]);
        };
    }
    return result;
}

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Tensor::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (double* g = self.input_grad(k))
                for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Tensor::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node& self) {
        if (double* g = self.input_grad(0))
            for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i];
        if (double* g = self.input_grad(1))
            for (std::size_t i = 0; i < self.size; ++i) g[i] -= self.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    Tensor av = a.detach(), bv = b.detach();
    return Tensor::make_result(a.shape(), std::move(out), {&a, &b}, [av, bv](detail::Node& self) {
        if (double* g = self.input_grad(0))
            for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i] * bv[i];
        if (double* g = self.input_grad(1))
            for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i] * av[i];
    });
}

Tensor add(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul(a, -1.0); }

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
    return unary(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::make_result({1}, {s}, {&a}, [](detail::Node& self) {
        double* g = self.input_grad(0);
        const double go = self.grad[0];
        const std::size_t n = self.inputs[0]->size;
        for (std::size_t i = 0; i < n; ++i) g[i] += go;
    });
}

Tensor mean(const Tensor& a) { return mul(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_per_batch(const Tensor& a) {
    const std::size_t n = a.dim(0);
    const std::size_t inner_size = a.numel() / n;
    std::vector<double> out(n, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner_size; ++i) out[b] += a[b * inner_size + i];
    return Tensor::make_result({n}, std::move(out), {&a}, [n, inner_size](detail::Node& self) {
        double* g = self.input_grad(0);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < inner_size; ++i) g[b * inner_size + i] += self.grad[b];
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1))
        throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.numel() / (n * c);
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* o = out.data() + (b * c + ch) * plane;
            const double bv = bias[ch];
            for (std::size_t i = 0; i < plane; ++i) o[i] += bv;
        }
    return Tensor::make_result(x.shape(), std::move(out), {&x, &bias}, [n, c, plane](detail::Node& self) {
        if (double* g = self.input_grad(0))
            for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i];
        if (double* g = self.input_grad(1))
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double* go = self.grad.data() + (b * c + ch) * plane;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += go[i];
                    g[ch] += acc;
                }
    });
}

Tensor add_batch_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != x.rank() || bias.dim(0) != 1 ||
        !std::equal(x.shape().begin() + 1, x.shape().end(), bias.shape().begin() + 1))
        throw ShapeError("add_batch_bias: " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
    const std::size_t n = x.dim(0), inner_size = bias.numel();
    std::vector<double> out(x.numel());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner_size; ++i) out[b * inner_size + i] = x[b * inner_size + i] + bias[i];
    return Tensor::make_result(x.shape(), std::move(out), {&x, &bias}, [n, inner_size](detail::Node& self) {
        if (double* gx = self.input_grad(0))
            for (std::size_t i = 0; i < n * inner_size; ++i) gx[i] += self.grad[i];
        if (double* gb = self.input_grad(1))
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < inner_size; ++i) gb[i] += self.grad[b * inner_size + i];
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1))
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim))
        throw ShapeError("linear: bias " + shape_str(bias.shape()));
    std::vector<double> wt(in * out_dim);
    simd::transpose(out_dim, in, weight.raw(), in, wt.data(), out_dim);
    std::vector<double> out(n * out_dim, 0.0);
    if (bias.defined())
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t o = 0; o < out_dim; ++o) out[b * out_dim + o] = bias[o];
    simd::gemm(n, out_dim, in, x.raw(), in, wt.data(), out_dim, out.data(), out_dim);
    Tensor xv = x.detach(), wv = weight.detach();
    return Tensor::make_result(
        {n, out_dim}, std::move(out), {&x, &weight, &bias}, [xv, wv, n, in, out_dim](detail::Node& self) {
            const double* go = self.grad.data();
            if (double* gx = self.input_grad(0))  // gx[n,in] += go[n,out] * W[out,in]
                simd::gemm(n, in, out_dim, go, out_dim, wv.raw(), in, gx, in);
            if (double* gw = self.input_grad(1)) {  // gW[out,in] += go^T[out,n] * x[n,in]
                std::vector<double> got(out_dim * n);
                simd::transpose(n, out_dim, go, out_dim, got.data(), n);
                simd::gemm(out_dim, in, n, got.data(), n, xv.raw(), in, gw, in);
            }
            if (double* gb = self.input_grad(2))
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t o = 0; o < out_dim; ++o) gb[o] += go[b * out_dim + o];
        });
}

Tensor expand_spatial(const Tensor& t, std::size_t height, std::size_t width) {
    if (t.rank() != 2) throw ShapeError("expand_spatial expects [N, C], got " + shape_str(t.shape()));
    const std::size_t n = t.dim(0), c = t.dim(1), plane = height * width;
    std::vector<double> out(n * c * plane);
    for (std::size_t i = 0; i < n * c; ++i)
        for (std::size_t p = 0; p < plane; ++p) out[i * plane + p] = t[i];
    return Tensor::make_result({n, c, height, width}, std::move(out), {&t}, [n, c, plane](detail::Node& self) {
        double* g = self.input_grad(0);
        for (std::size_t i = 0; i < n * c; ++i) {
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) acc += self.grad[i * plane + p];
            g[i] += acc;
        }
    });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Tensor& first = parts.front();
    if (first.rank() < 2) throw ShapeError("concat_channels: rank < 2");
    const std::size_t n = first.dim(0);
    const std::size_t plane = first.numel() / (n * first.dim(1));
    std::size_t total_c = 0;
    std::vector<std::size_t> chans;
    for (const Tensor& p : parts) {
        if (p.rank() != first.rank() || p.dim(0) != n || p.numel() / (n * p.dim(1)) != plane)
            throw ShapeError("concat_channels: incompatible " + shape_str(p.shape()) + " vs " +
                             shape_str(first.shape()));
        for (std::size_t a = 2; a < p.rank(); ++a)
            if (p.dim(a) != first.dim(a)) throw ShapeError("concat_channels: spatial mismatch");
        chans.push_back(p.dim(1));
        total_c += p.dim(1);
    }
    Shape shape = first.shape();
    shape[1] = total_c;
    std::vector<double> out(n * total_c * plane);
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const std::size_t len = chans[k] * plane;
            std::copy_n(parts[k].raw() + b * len, len, out.data() + (b * total_c) * plane + offset);
            offset += len;
        }
    }
    std::vector<const Tensor*> inputs;
    for (const Tensor& p : parts) inputs.push_back(&p);
    return Tensor::make_result(std::move(shape), std::move(out), inputs,
                               [n, total_c, plane, chans](detail::Node& self) {
                                   std::size_t offset = 0;
                                   for (std::size_t k = 0; k < chans.size(); ++k) {
                                       const std::size_t len = chans[k] * plane;
                                       if (double* g = self.input_grad(k))
                                           for (std::size_t b = 0; b < n; ++b) {
                                               const double* src = self.grad.data() + b * total_c * plane + offset;
                                               double* dst = g + b * len;
                                               for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
                                           }
                                       offset += len;
                                   }
                               });
}

Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count) {
    if (t.rank() < 2 || count == 0 || begin + count > t.dim(1))
        throw ShapeError("slice_channels: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_str(t.shape()));
    const std::size_t n = t.dim(0), c = t.dim(1), plane = t.numel() / (n * c);
    Shape shape = t.shape();
    shape[1] = count;
    std::vector<double> out(n * count * plane);
    for (std::size_t b = 0; b < n; ++b)
        std::copy_n(t.raw() + (b * c + begin) * plane, count * plane, out.data() + b * count * plane);
    return Tensor::make_result(std::move(shape), std::move(out), {&t}, [n, c, plane, begin, count](detail::Node& self) {
        double* g = self.input_grad(0);
        for (std::size_t b = 0; b < n; ++b) {
            double* dst = g + (b * c + begin) * plane;
            const double* src = self.grad.data() + b * count * plane;
            for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
        }
    });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count) {
    if (t.rank() != 4 || count == 0 || begin + count > t.dim(2))
        throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_str(t.shape()));
    const std::size_t planes = t.dim(0) * t.dim(1), h = t.dim(2), w = t.dim(3);
    Shape shape = t.shape();
    shape[2] = count;
    std::vector<double> out(planes * count * w);
    for (std::size_t p = 0; p < planes; ++p)
        std::copy_n(t.raw() + (p * h + begin) * w, count * w, out.data() + p * count * w);
    return Tensor::make_result(std::move(shape), std::move(out), {&t}, [planes, h, w, begin, count](detail::Node& self) {
        double* g = self.input_grad(0);
        for (std::size_t p = 0; p < planes; ++p) {
            double* dst = g + (p * h + begin) * w;
            const double* src = self.grad.data() + p * count * w;
            for (std::size_t i = 0; i < count * w; ++i) dst[i] += src[i];
        }
    });
}

double inner(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "inner");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace pvae
