#include "pvae/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pvae/errors.hpp"
#include "pvae/ops.hpp"

namespace pvae {

namespace {

Tensor normal_tensor(const Shape& shape, const CounterRng& rng, std::size_t offset) {
    std::vector<double> v(shape_numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.normal(offset + i);
    return Tensor::from(shape, std::move(v));
}

// Copies of image b of x, `count` times.
Tensor repeat_image(const Tensor& x, std::size_t b, std::size_t count) {
    const std::size_t per = x.numel() / x.dim(0);
    std::vector<double> v(count * per);
    for (std::size_t k = 0; k < count; ++k) std::copy_n(x.raw() + b * per, per, v.data() + k * per);
    Shape shape = x.shape();
    shape[0] = count;
    return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

std::vector<Tensor> latent_noise(const ModelConfig& config, std::size_t n, const CounterRng& rng) {
    std::vector<Tensor> out;
    for (std::size_t l = 1; l <= config.latent_levels(); ++l)
        out.push_back(normal_tensor(config.latent_shape(l, n), rng.substream(l), 0));
    return out;
}

ElboResult elbo(const Model& model, const Tensor& x, const std::vector<Tensor>& noise, double kl_weight) {
    const ModelConfig& c = model.config();
    const std::size_t L = c.latent_levels();
    if (noise.size() != L)
        throw ShapeError("elbo: expected " + std::to_string(L) + " noise tensors, got " + std::to_string(noise.size()));
    const std::size_t n = x.dim(0);
    ElboResult r;
    const std::vector<DiagGaussianParams> q = encode(model, x);
    for (std::size_t l = 0; l < L; ++l) {
        if (noise[l].shape() != q[l].shape())
            throw ShapeError("elbo: noise " + shape_str(noise[l].shape()) + " for level " + std::to_string(l + 1) +
                             ", expected " + shape_str(q[l].shape()));
        r.levels.push_back(LatentLevel{l + 1, q[l], gaussian_sample(q[l], noise[l])});
    }
    const Tensor z1 = L > 0 ? r.levels[0].z : Tensor{};
    r.recon = reconstruction_nll(model, decode_pixel_logits(model, x, z1), x);
    if (L == 1) {
        r.kl.push_back(gaussian_kl(q[0], top_prior(model, n)));
    } else if (L == 2) {
        r.kl.push_back(gaussian_kl(q[0], latent_prior_params(model, r.levels[1].z, z1)));
        r.kl.push_back(gaussian_kl(q[1], top_prior(model, n)));
    }

    Tensor per_example = r.recon;
    for (const Tensor& k : r.kl) per_example = add(per_example, kl_weight == 1.0 ? k : mul(k, kl_weight));
    r.loss = mean(per_example);

    auto batch_mean = [n](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data()) s += v;
        return s / static_cast<double>(n);
    };
    r.breakdown.reconstruction_nll = batch_mean(r.recon);
    r.breakdown.total = r.breakdown.reconstruction_nll;
    for (const Tensor& k : r.kl) {
        r.breakdown.kl_per_level.push_back(batch_mean(k));
        r.breakdown.total += r.breakdown.kl_per_level.back();
    }
    return r;
}

std::vector<double> log_importance_weights(const Model& model, const Tensor& x, const std::vector<Tensor>& z,
                                           const std::vector<DiagGaussianParams>& posteriors) {
    const NoGradGuard guard;
    const std::size_t L = model.config().latent_levels();
    const std::size_t n = x.dim(0);
    const Tensor z1 = L > 0 ? z.at(0) : Tensor{};
    const Tensor recon = reconstruction_nll(model, decode_pixel_logits(model, x, z1), x);
    std::vector<double> out(n);
    for (std::size_t b = 0; b < n; ++b) out[b] = -recon[b];
    auto accumulate = [&](const Tensor& t, double sign) {
        for (std::size_t b = 0; b < n; ++b) out[b] += sign * t[b];
    };
    if (L == 1) {
        accumulate(gaussian_log_prob(z[0], top_prior(model, n)), 1.0);
    } else if (L == 2) {
        accumulate(gaussian_log_prob(z[1], top_prior(model, n)), 1.0);
        accumulate(gaussian_log_prob(z[0], latent_prior_params(model, z[1], z[0])), 1.0);
    }
    for (std::size_t l = 0; l < L; ++l) accumulate(gaussian_log_prob(z[l], posteriors[l]), -1.0);
    return out;
}

std::vector<double> importance_nll(const Model& model, const Tensor& x, std::size_t K, std::uint64_t seed,
                                   std::size_t chunk, std::size_t first_index) {
    if (K == 0) throw ContractError("importance_nll needs at least one sample");
    if (chunk == 0) throw ContractError("importance_nll chunk must be positive");
    const NoGradGuard guard;
    const ModelConfig& c = model.config();
    const std::size_t L = c.latent_levels();
    const std::size_t n = x.dim(0);
    std::vector<double> result(n);
    for (std::size_t b = 0; b < n; ++b) {
        const CounterRng stream(seed, first_index + b);
        std::vector<DiagGaussianParams> q1 = encode(model, repeat_image(x, b, 1));
        std::vector<double> logw;
        logw.reserve(K);
        for (std::size_t k0 = 0; k0 < K; k0 += chunk) {
            const std::size_t m = std::min(chunk, K - k0);
            const Tensor xs = repeat_image(x, b, m);
            std::vector<DiagGaussianParams> q;
            std::vector<Tensor> z;
            for (std::size_t l = 0; l < L; ++l) {
                const std::size_t dim = q1[l].mu().numel();
                Shape shape = q1[l].shape();
                shape[0] = m;
                q.emplace_back(repeat_image(q1[l].mu(), 0, m), repeat_image(q1[l].logvar(), 0, m));
                z.push_back(gaussian_sample(q.back(), normal_tensor(shape, stream.substream(l + 1), k0 * dim)));
            }
            const std::vector<double> w = log_importance_weights(model, xs, z, q);
            logw.insert(logw.end(), w.begin(), w.end());
        }
        const double top = *std::max_element(logw.begin(), logw.end());
        if (!std::isfinite(top)) throw NumericError("importance_nll: non-finite log weight");
        double s = 0.0;
        for (double w : logw) s += std::exp(w - top);
        result[b] = -(top + std::log(s) - std::log(static_cast<double>(K)));
    }
    return result;
}

double bits_per_dim(double nats, const ModelConfig& config) {
    return nats / (std::numbers::ln2 * static_cast<double>(config.channels * config.height * config.width));
}

}  // namespace pvae
