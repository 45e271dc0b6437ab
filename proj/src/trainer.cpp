#include "pvae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "pvae/errors.hpp"
#include "pvae/ops.hpp"

namespace pvae {

namespace {

constexpr std::uint64_t kNoiseStream = 0x2015e;

}  // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
    if (!(learning_rate > 0.0)) fail("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) fail("Adam betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) fail("Adam epsilon must be positive");
    if (!(clip_norm >= 0.0)) fail("clip norm must be non-negative");
    if (batch_size == 0) fail("batch size must be positive");
    if (steps == 0) fail("steps must be at least 1");
    if (eval_interval == 0) fail("eval interval must be at least 1");
    if (dataset != "toy" && dataset != "mnist") fail("dataset must be toy or mnist");
    if (train_size == 0 || test_size == 0) fail("dataset sizes must be positive");
}

AdamState make_adam_state(const ParameterStore& params) {
    AdamState s;
    for (const auto& [name, t] : params.entries()) {
        s.m.push_back(Tensor::zeros(t.shape()));
        s.v.push_back(Tensor::zeros(t.shape()));
    }
    return s;
}

double gradient_norm(const ParameterStore& params, const GradientMap& grads) {
    double s = 0.0;
    for (const auto& [name, t] : params.entries())
        if (const Tensor* g = grads.find(t))
            for (double v : g->data()) s += v * v;
    return std::sqrt(s);
}

void adam_step(ParameterStore& params, const GradientMap& grads, AdamState& state, const TrainConfig& hyper,
               double grad_scale) {
    auto& entries = params.entries();
    if (state.m.size() != entries.size() || state.v.size() != entries.size())
        throw ContractError("adam_step: optimizer state does not match the parameter set");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Tensor* g = grads.find(entries[i].second);
        if (!g) continue;
        for (double v : g->data())
            if (!std::isfinite(v)) throw TrainingError("non-finite gradient for parameter " + entries[i].first);
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(hyper.beta1, t);
    const double c2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Tensor& p = entries[i].second;
        const Tensor* g = grads.find(p);
        std::span<double> w = p.mutable_data();
        std::span<double> m = state.m[i].mutable_data();
        std::span<double> v = state.v[i].mutable_data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = g ? grad_scale * (*g)[j] : 0.0;
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * gj;
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * gj * gj;
            w[j] -= hyper.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + hyper.epsilon);
        }
    }
}

std::string metrics_header() { return "step,elbo,recon,kl_1,kl_2,seconds"; }

std::string format_metrics_row(const MetricsRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.3f", static_cast<unsigned long long>(r.step),
                  r.elbo, r.recon, r.kl_1, r.kl_2, r.seconds);
    return buf;
}

TrainState initial_state(const Model& model) {
    TrainState s;
    s.adam = make_adam_state(model.parameters());
    return s;
}

double kl_weight(const TrainConfig& config, std::uint64_t step) {
    if (config.kl_warmup == 0) return 1.0;
    return std::min(1.0, static_cast<double>(step) / static_cast<double>(config.kl_warmup));
}

Tensor batch_for_step(const Tensor& images, const TrainConfig& config, std::uint64_t step) {
    if (step == 0) throw ContractError("steps are numbered from 1");
    const std::size_t n = images.dim(0);
    const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::uint64_t epoch = (step - 1) / per_epoch;
    const auto order = batch_order(n, config.batch_size, config.seed, epoch);
    return gather_images(images, order[(step - 1) % per_epoch]);
}

std::vector<Tensor> noise_for_step(const ModelConfig& model, std::size_t batch, const TrainConfig& config,
                                   std::uint64_t step) {
    return latent_noise(model, batch, CounterRng(config.seed, kNoiseStream).substream(step));
}

void train(Model& model, const Tensor& images, const TrainConfig& config, TrainState& state,
           const TrainCallbacks& callbacks) {
    config.validate();
    if (state.adam.m.size() != model.parameters().size()) state.adam = make_adam_state(model.parameters());
    if (state.interval_sums.size() != 5) state.interval_sums.assign(5, 0.0);
    using Clock = std::chrono::steady_clock;
    for (std::uint64_t step = state.step + 1; step <= config.steps; ++step) {
        const auto t0 = Clock::now();
        const Tensor x = batch_for_step(images, config, step);
        const ElboResult r = elbo(model, x, noise_for_step(model.config(), x.dim(0), config, step),
                                  kl_weight(config, step));
        if (!std::isfinite(r.loss.item()))
            throw TrainingError("non-finite loss at step " + std::to_string(step));
        const GradientMap grads = backward(r.loss);
        double scale = 1.0;
        if (config.clip_norm > 0.0) {
            const double norm = gradient_norm(model.parameters(), grads);
            if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm at step " + std::to_string(step));
            if (norm > config.clip_norm) scale = config.clip_norm / norm;
        }
        adam_step(model.parameters(), grads, state.adam, config, scale);

        const ElboBreakdown& b = r.breakdown;
        auto& sums = state.interval_sums;
        sums[0] += 1.0;
        sums[1] += b.total;
        sums[2] += b.reconstruction_nll;
        sums[3] += b.kl_per_level.size() > 0 ? b.kl_per_level[0] : 0.0;
        sums[4] += b.kl_per_level.size() > 1 ? b.kl_per_level[1] : 0.0;
        state.step = step;
        // Wall-clock time is only tracked when logged, so that deterministic runs also
        // produce byte-identical checkpoints.
        if (config.log_seconds) state.seconds += std::chrono::duration<double>(Clock::now() - t0).count();

        if (step % config.eval_interval == 0 || step == config.steps) {
            MetricsRow row;
            row.step = step;
            row.recon = sums[2] / sums[0];
            row.kl_1 = sums[3] / sums[0];
            row.kl_2 = sums[4] / sums[0];
            row.elbo = row.recon + row.kl_1 + row.kl_2;
            row.seconds = config.log_seconds ? state.seconds : 0.0;
            sums.assign(5, 0.0);
            if (callbacks.on_metrics) callbacks.on_metrics(row);
        }
        const bool ckpt = (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0) ||
                          step == config.steps;
        if (ckpt && callbacks.on_checkpoint) callbacks.on_checkpoint(state);
    }
}

ElboBreakdown evaluate_elbo(const Model& model, const Tensor& images, std::uint64_t seed, std::size_t batch_size) {
    const NoGradGuard guard;
    const std::size_t n = images.dim(0);
    ElboBreakdown total;
    total.kl_per_level.assign(model.config().latent_levels(), 0.0);
    for (std::size_t i = 0; i < n; i += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t j = i; j < std::min(n, i + batch_size); ++j) idx.push_back(j);
        const Tensor x = gather_images(images, idx);
        const ElboResult r = elbo(model, x, latent_noise(model.config(), idx.size(), CounterRng(seed, i)));
        const double w = static_cast<double>(idx.size()) / static_cast<double>(n);
        total.reconstruction_nll += w * r.breakdown.reconstruction_nll;
        for (std::size_t l = 0; l < total.kl_per_level.size(); ++l)
            total.kl_per_level[l] += w * r.breakdown.kl_per_level[l];
    }
    total.total = total.reconstruction_nll;
    for (double k : total.kl_per_level) total.total += k;
    return total;
}

}  // namespace pvae
