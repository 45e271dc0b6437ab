#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pvae/checkpoint.hpp"
#include "pvae/config.hpp"
#include "pvae/data.hpp"

namespace pvae {

// Training or evaluation images selected by the train config: the toy corpus
// (seeded by binarization_seed) or an MNIST split, binarized for Bernoulli
// outputs and kept as integer intensities 0..255 for softmax256 outputs.
Dataset load_split(const RunConfig& config, bool train);

// The model config with its image shape taken from the data.
ModelConfig fit_to_data(ModelConfig model, const Dataset& data);

struct TrainRun {
    RunConfig config;  // as used, image shape fitted to the data
    Model model;
    TrainState state;
    std::vector<MetricsRow> rows;
};

// Trains from scratch. With a non-empty out_dir, writes out_dir/config.txt,
// out_dir/metrics.csv (one line per row, flushed as they arrive) and
// out_dir/model.ckpt at every checkpoint, so a diverging run leaves its last
// checkpoint behind.
TrainRun run_training(RunConfig config, const Dataset& train_data, const std::string& out_dir = "");

struct EvalReport {
    std::size_t images = 0;
    std::size_t importance_samples = 0;
    ElboBreakdown elbo;
    double nll_importance = 0.0;
    double bits_per_dim_elbo = 0.0;
    double bits_per_dim_nll = 0.0;
};

// Mean ELBO bound and importance-sampled NLL over `images`. For models
// without latents the NLL is exact and K is not used.
EvalReport evaluate_model(const Model& model, const Tensor& images, std::size_t K, std::uint64_t seed);
std::string format_eval_report(const EvalReport& report, const ModelConfig& config);

struct SweepRow {
    std::size_t layers = 0;
    Variant variant = Variant::pixelvae;
    std::uint64_t seed = 0;
    double elbo = 0.0;
    double nll = 0.0;  // NaN when not estimated
    double recon = 0.0;
    double kl_1 = 0.0;
    double kl_2 = 0.0;
};

struct SweepOptions {
    RunConfig base;
    std::vector<std::size_t> layers;
    std::vector<Variant> variants = {Variant::pixelvae, Variant::pixelcnn_only};
    std::size_t seeds = 1;                 // seeds base.train.seed, +1, ...
    std::size_t importance_samples = 0;    // 0: nll column only for exact models
    std::size_t jobs = 1;                  // worker threads over cells
    std::function<void(const SweepRow&)> on_row;  // called in cell order
};

// Trains every (k, variant, seed) cell with the same budget and evaluates it
// on `test_data`. Rows come back ordered by k, then variant, then seed,
// independent of `jobs`.
std::vector<SweepRow> run_sweep(const SweepOptions& options, const Dataset& train_data, const Dataset& test_data);

std::string sweep_header();
std::string format_sweep_row(const SweepRow& row);
// Throws FormatError on a wrong header, malformed line or empty table.
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

struct BreakdownRow {
    std::size_t layers = 0;
    Variant variant = Variant::pixelvae;
    std::size_t runs = 0;
    double recon = 0.0;
    double kl = 0.0;
    double elbo = 0.0;
};

// Mean reconstruction and total KL per (k, variant), ordered like the sweep.
std::vector<BreakdownRow> cost_breakdown(const std::vector<SweepRow>& rows);
std::string breakdown_header();
std::string format_breakdown_row(const BreakdownRow& row);

// "0,1,2" -> {0, 1, 2}; "RxC" -> {R, C}. Throw ConfigError.
std::vector<std::size_t> parse_size_list(const std::string& text);
std::pair<std::size_t, std::size_t> parse_grid(const std::string& text);

}  // namespace pvae
