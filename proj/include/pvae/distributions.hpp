#pragma once

#include "pvae/tensor.hpp"

namespace pvae {

inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 12.0;

// Diagonal Gaussian. logvar is clamped to [kLogVarMin, kLogVarMax] on
// construction (gradient passes only inside the range).
class DiagGaussianParams {
public:
    DiagGaussianParams() = default;
    DiagGaussianParams(Tensor mu, Tensor logvar);

    // Unit Gaussian of the given shape.
    static DiagGaussianParams standard(const Shape& shape);

    const Tensor& mu() const { return mu_; }
    const Tensor& logvar() const { return logvar_; }
    const Shape& shape() const { return mu_.shape(); }

private:
    Tensor mu_;
    Tensor logvar_;
};

// mu + exp(logvar / 2) * noise
Tensor gaussian_sample(const DiagGaussianParams& params, const Tensor& noise);

// Per batch element (leading axis): sum_d log N(z_d; mu_d, exp(logvar_d)). Shape [N].
Tensor gaussian_log_prob(const Tensor& z, const DiagGaussianParams& params);

// Per batch element: KL(q || p), closed form. Shape [N].
Tensor gaussian_kl(const DiagGaussianParams& q, const DiagGaussianParams& p);

// Per batch element: sum_pixels softplus(logit) - target * logit. Targets must be 0 or 1.
Tensor bernoulli_nll(const Tensor& logits, const Tensor& targets);

// logits [N, C, 256, H, W] or [N, C*256, H, W] (class axis after channel);
// targets [N, C, H, W] holding integers 0..255. Per batch element sum of
// logsumexp(logits) - logit[target]. Shape [N].
Tensor categorical_nll(const Tensor& logits, const Tensor& targets);

}  // namespace pvae
