#include "pvae/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "pvae/errors.hpp"
#include "pvae/ops.hpp"

namespace pvae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

std::size_t batch_of(const Tensor& t) { return t.dim(0); }

}  // namespace

DiagGaussianParams::DiagGaussianParams(Tensor mu, Tensor logvar) : mu_(std::move(mu)) {
    require_same(mu_.shape(), logvar.shape(), "DiagGaussianParams");
    for (double v : logvar.data())
        if (std::isnan(v)) throw NumericError("DiagGaussianParams: NaN log-variance");
    logvar_ = clamp(logvar, kLogVarMin, kLogVarMax);
}

DiagGaussianParams DiagGaussianParams::standard(const Shape& shape) {
    return DiagGaussianParams(Tensor::zeros(shape), Tensor::zeros(shape));
}

Tensor gaussian_sample(const DiagGaussianParams& params, const Tensor& noise) {
    require_same(params.shape(), noise.shape(), "gaussian_sample");
    const Tensor& mu = params.mu();
    const Tensor& lv = params.logvar();
    const std::size_t n = mu.numel();
    std::vector<double> out(n), sd(n);
    for (std::size_t i = 0; i < n; ++i) {
        sd[i] = std::exp(0.5 * lv[i]);
        out[i] = mu[i] + sd[i] * noise[i];
    }
    Tensor nv = noise.detach();
    return Tensor::make_result(mu.shape(), std::move(out), {&mu, &lv, &noise},
                               [nv, sd = std::move(sd)](detail::Node& self) {
                                   if (double* g = self.input_grad(0))
                                       for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i];
                                   if (double* g = self.input_grad(1))
                                       for (std::size_t i = 0; i < self.size; ++i)
                                           g[i] += self.grad[i] * 0.5 * sd[i] * nv[i];
                                   if (double* g = self.input_grad(2))
                                       for (std::size_t i = 0; i < self.size; ++i) g[i] += self.grad[i] * sd[i];
                               });
}

Tensor gaussian_log_prob(const Tensor& z, const DiagGaussianParams& params) {
    require_same(z.shape(), params.shape(), "gaussian_log_prob");
    const Tensor& mu = params.mu();
    const Tensor& lv = params.logvar();
    const std::size_t nb = batch_of(z), d = z.numel() / nb;
    std::vector<double> out(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (std::size_t i = b * d; i < (b + 1) * d; ++i) {
            const double diff = z[i] - mu[i];
            acc += -kHalfLog2Pi - 0.5 * lv[i] - diff * diff / (2.0 * std::exp(lv[i]));
        }
        out[b] = acc;
    }
    Tensor zv = z.detach(), mv = mu.detach(), lvv = lv.detach();
    return Tensor::make_result({nb}, std::move(out), {&z, &mu, &lv}, [zv, mv, lvv, d](detail::Node& self) {
        double* gz = self.input_grad(0);
        double* gm = self.input_grad(1);
        double* gl = self.input_grad(2);
        for (std::size_t i = 0; i < zv.numel(); ++i) {
            const double go = self.grad[i / d];
            const double inv_var = std::exp(-lvv[i]);
            const double diff = zv[i] - mv[i];
            if (gz) gz[i] -= go * diff * inv_var;
            if (gm) gm[i] += go * diff * inv_var;
            if (gl) gl[i] += go * (-0.5 + 0.5 * diff * diff * inv_var);
        }
    });
}

Tensor gaussian_kl(const DiagGaussianParams& q, const DiagGaussianParams& p) {
    require_same(q.shape(), p.shape(), "gaussian_kl");
    const Tensor &mq = q.mu(), &lq = q.logvar(), &mp = p.mu(), &lp = p.logvar();
    const std::size_t nb = batch_of(mq), d = mq.numel() / nb;
    std::vector<double> out(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (std::size_t i = b * d; i < (b + 1) * d; ++i) {
            const double diff = mq[i] - mp[i];
            acc += 0.5 * (std::exp(lq[i] - lp[i]) + diff * diff * std::exp(-lp[i]) - 1.0 + lp[i] - lq[i]);
        }
        out[b] = acc;
    }
    Tensor mqv = mq.detach(), lqv = lq.detach(), mpv = mp.detach(), lpv = lp.detach();
    return Tensor::make_result({nb}, std::move(out), {&mq, &lq, &mp, &lp},
                               [mqv, lqv, mpv, lpv, d](detail::Node& self) {
                                   double* gmq = self.input_grad(0);
                                   double* glq = self.input_grad(1);
                                   double* gmp = self.input_grad(2);
                                   double* glp = self.input_grad(3);
                                   for (std::size_t i = 0; i < mqv.numel(); ++i) {
                                       const double go = self.grad[i / d];
                                       const double inv_vp = std::exp(-lpv[i]);
                                       const double ratio = std::exp(lqv[i] - lpv[i]);
                                       const double diff = mqv[i] - mpv[i];
                                       if (gmq) gmq[i] += go * diff * inv_vp;
                                       if (gmp) gmp[i] -= go * diff * inv_vp;
                                       if (glq) glq[i] += go * 0.5 * (ratio - 1.0);
                                       if (glp) glp[i] += go * 0.5 * (1.0 - ratio - diff * diff * inv_vp);
                                   }
                               });
}

Tensor bernoulli_nll(const Tensor& logits, const Tensor& targets) {
    require_same(logits.shape(), targets.shape(), "bernoulli_nll");
    for (double t : targets.data())
        if (t != 0.0 && t != 1.0) throw ContractError("bernoulli_nll: targets must be exactly 0 or 1");
    const std::size_t nb = batch_of(logits), d = logits.numel() / nb;
    std::vector<double> out(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (std::size_t i = b * d; i < (b + 1) * d; ++i) {
            const double l = logits[i];
            const double sp = l > 0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
            acc += sp - targets[i] * l;
        }
        out[b] = acc;
    }
    Tensor lv = logits.detach(), tv = targets.detach();
    return Tensor::make_result({nb}, std::move(out), {&logits}, [lv, tv, d](detail::Node& self) {
        double* g = self.input_grad(0);
        for (std::size_t i = 0; i < lv.numel(); ++i) {
            const double l = lv[i];
            const double s = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
            g[i] += self.grad[i / d] * (s - tv[i]);
        }
    });
}

Tensor categorical_nll(const Tensor& logits, const Tensor& targets) {
    constexpr std::size_t K = 256;
    if (targets.rank() != 4) throw ShapeError("categorical_nll: targets must be [N, C, H, W]");
    const std::size_t nb = targets.dim(0), ch = targets.dim(1), plane = targets.dim(2) * targets.dim(3);
    const bool five = logits.rank() == 5 && logits.dim(0) == nb && logits.dim(1) == ch && logits.dim(2) == K &&
                      logits.dim(3) == targets.dim(2) && logits.dim(4) == targets.dim(3);
    const bool four = logits.rank() == 4 && logits.dim(0) == nb && logits.dim(1) == ch * K &&
                      logits.dim(2) == targets.dim(2) && logits.dim(3) == targets.dim(3);
    if (!five && !four)
        throw ShapeError("categorical_nll: logits " + shape_str(logits.shape()) + " need 256 classes per channel of " +
                         shape_str(targets.shape()));
    std::vector<std::size_t> cls(targets.numel());
    for (std::size_t i = 0; i < targets.numel(); ++i) {
        const double t = targets[i];
        if (!(t >= 0.0 && t <= 255.0) || t != std::floor(t))
            throw ContractError("categorical_nll: target out of range 0..255");
        cls[i] = static_cast<std::size_t>(t);
    }
    // logits[b, c, k, p] at ((b * ch + c) * K + k) * plane + p
    std::vector<double> out(nb, 0.0), lse(targets.numel());
    for (std::size_t b = 0; b < nb; ++b)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
                const double* base = logits.raw() + (b * ch + c) * K * plane + p;
                double mx = base[0];
                for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, base[k * plane]);
                double s = 0.0;
                for (std::size_t k = 0; k < K; ++k) s += std::exp(base[k * plane] - mx);
                const std::size_t t = (b * ch + c) * plane + p;
                lse[t] = mx + std::log(s);
                out[b] += lse[t] - base[cls[t] * plane];
            }
    Tensor lv = logits.detach();
    return Tensor::make_result({nb}, std::move(out), {&logits},
                               [lv, cls = std::move(cls), lse = std::move(lse), nb, ch, plane](detail::Node& self) {
                                   double* g = self.input_grad(0);
                                   for (std::size_t b = 0; b < nb; ++b)
                                       for (std::size_t c = 0; c < ch; ++c)
                                           for (std::size_t p = 0; p < plane; ++p) {
                                               const std::size_t t = (b * ch + c) * plane + p;
                                               const std::size_t off = (b * ch + c) * K * plane + p;
                                               const double go = self.grad[b];
                                               for (std::size_t k = 0; k < K; ++k)
                                                   g[off + k * plane] += go * std::exp(lv[off + k * plane] - lse[t]);
                                               g[off + cls[t] * plane] -= go;
                                           }
                               });
}

}  // namespace pvae
