#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvae/autograd.hpp"
#include "pvae/data.hpp"
#include "pvae/model.hpp"
#include "pvae/objective.hpp"

namespace pvae {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 5.0;          // global gradient-norm clip; 0 disables
    std::size_t batch_size = 16;
    std::size_t steps = 2000;
    std::uint64_t seed = 1;          // parameter init, data order, latent noise
    std::size_t kl_warmup = 0;       // steps of linear KL ramp 0 -> 1; 0 = off
    std::size_t checkpoint_interval = 0;  // 0 = only at the end
    std::size_t eval_interval = 100;      // steps per metrics row
    bool log_seconds = false;             // true logs wall-clock seconds (not reproducible)

    // Data selection.
    std::string dataset = "toy";     // toy | mnist
    std::string data_dir = "data/mnist";
    std::size_t train_size = 10000;
    std::size_t test_size = 1000;
    Binarization binarization = Binarization::stochastic;
    std::uint64_t binarization_seed = 0;

    void validate() const;  // throws ConfigError
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> m;  // aligned with ParameterStore::entries()
    std::vector<Tensor> v;
};

AdamState make_adam_state(const ParameterStore& params);

// One bias-corrected Adam update. Parameters without a gradient entry are
// treated as having zero gradient. `grad_scale` multiplies every gradient
// (clipping). A non-finite gradient throws TrainingError naming the parameter.
void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state, const TrainConfig& hyper,
               double grad_scale = 1.0);

// Global L2 norm over all parameter gradients.
double gradient_norm(const ParameterStore& params, const GradientMap& grads);

struct MetricsRow {
    std::uint64_t step = 0;
    double elbo = 0.0;
    double recon = 0.0;
    double kl_1 = 0.0;
    double kl_2 = 0.0;
    double seconds = 0.0;
};

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

struct TrainState {
    std::uint64_t step = 0;  // completed steps
    AdamState adam;
    // Running sums for the open metrics interval: steps, elbo, recon, kl_1, kl_2.
    std::vector<double> interval_sums = std::vector<double>(5, 0.0);
    double seconds = 0.0;  // wall clock accumulated over all runs
};

TrainState initial_state(const Model& model);

struct TrainCallbacks {
    std::function<void(const MetricsRow&)> on_metrics;
    std::function<void(const TrainState&)> on_checkpoint;
};

// KL multiplier for a step (1-based).
double kl_weight(const TrainConfig& config, std::uint64_t step);

// The batch and latent noise used at a step (1-based) are pure functions of
// (config.seed, step), so a resumed run replays the uninterrupted one.
Tensor batch_for_step(const Tensor& images, const TrainConfig& config, std::uint64_t step);
std::vector<Tensor> noise_for_step(const ModelConfig& model, std::size_t batch, const TrainConfig& config,
                                   std::uint64_t step);

// Continue training from state.step up to config.steps. Emits one metrics
// row per eval_interval steps (the mean over that interval's batches) and
// after the final step; calls on_checkpoint every checkpoint_interval steps
// and at the end. A non-finite loss throws TrainingError before any update.
void train(Model& model, const Tensor& images, const TrainConfig& config, TrainState& state,
           const TrainCallbacks& callbacks = {});

// Mean ELBO breakdown over a dataset; the noise for the batch starting at
// image i comes from stream (seed, i), so results are reproducible.
ElboBreakdown evaluate_elbo(const Model& model, const Tensor& images, std::uint64_t seed, std::size_t batch_size = 50);

}  // namespace pvae
