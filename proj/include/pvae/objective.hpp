#pragma once

#include <cstdint>
#include <vector>

#include "pvae/model.hpp"
#include "pvae/random.hpp"

namespace pvae {

// Batch-mean cost decomposition in nats per image.
struct ElboBreakdown {
    double reconstruction_nll = 0.0;
    std::vector<double> kl_per_level;
    double total = 0.0;  // reconstruction_nll + sum(kl_per_level), summed in that order
};

struct ElboResult {
    Tensor loss;                 // [1]: mean_n(recon + kl_weight * sum_levels kl), differentiable
    Tensor recon;                // [N]
    std::vector<Tensor> kl;      // per level, [N]
    std::vector<LatentLevel> levels;
    ElboBreakdown breakdown;     // unweighted
};

// Unit-normal noise for every latent level of a batch of n: level l draws
// from rng.substream(l), element i of the level tensor at index i.
std::vector<Tensor> latent_noise(const ModelConfig& config, std::size_t n, const CounterRng& rng);

// Negative ELBO with a single reparameterized sample per level. The level-1
// KL of a two-level model is the closed form against p(z1 | z2) evaluated at
// the sampled z2 (and the sampled z1 as autoregressive context); the top
// level is measured against the unit Gaussian.
ElboResult elbo(const Model& model, const Tensor& x, const std::vector<Tensor>& noise, double kl_weight = 1.0);

// log p(x, z) - log q(z | x) per batch element for given latent samples
// (graph-free). z holds one tensor per level.
std::vector<double> log_importance_weights(const Model& model, const Tensor& x, const std::vector<Tensor>& z,
                                           const std::vector<DiagGaussianParams>& posteriors);

// -log (1/K sum_k w_k) per image, K posterior samples each. Image b uses the
// noise stream (seed, first_index + b), so results do not depend on the
// batch split or on `chunk`, the number of samples evaluated at once.
std::vector<double> importance_nll(const Model& model, const Tensor& x, std::size_t K, std::uint64_t seed,
                                   std::size_t chunk = 100, std::size_t first_index = 0);

// Nats per image to bits per subpixel.
double bits_per_dim(double nats, const ModelConfig& config);

}  // namespace pvae
