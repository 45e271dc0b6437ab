// Command-line front end. Exit codes: 0 success, 1 runtime failure
// (I/O, malformed files, divergence), 2 bad flags or inconsistent settings.
//
// Settings compose in a fixed order: built-in defaults, then --config file,
// then --set key=value entries, then the dedicated flags.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "pvae/checkpoint.hpp"
#include "pvae/cli.hpp"
#include "pvae/errors.hpp"
#include "pvae/pgm.hpp"
#include "pvae/sampler.hpp"

using namespace pvae;

namespace {

struct RunFlags {
    std::string config_file;
    std::vector<std::string> settings;
    std::string dataset, variant, layers, levels, seed, steps, data_dir, output;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_layers) {
    cmd->add_option("--config", f.config_file, "key=value settings file (model.*, train.*)");
    cmd->add_option("--set", f.settings, "extra key=value setting, repeatable");
    cmd->add_option("--dataset", f.dataset, "toy | mnist");
    cmd->add_option("--variant", f.variant, "vae-only | pixelcnn-only | pixelvae | gated-pixelvae | gated-no-upsampling");
    if (with_layers) cmd->add_option("--layers", f.layers, "PixelCNN layers in the pixel decoder");
    cmd->add_option("--levels", f.levels, "latent levels (1 or 2)");
    cmd->add_option("--seed", f.seed, "seed for initialization, data order and noise")->required();
    cmd->add_option("--steps", f.steps, "training steps");
    cmd->add_option("--data-dir", f.data_dir, "directory holding the MNIST IDX files");
    cmd->add_option("--output", f.output, "bernoulli | softmax256");
}

RunConfig compose(const RunFlags& f) {
    RunConfig c = f.config_file.empty() ? RunConfig{} : load_config_file(f.config_file);
    for (const std::string& s : f.settings) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
    }
    const std::pair<const char*, const std::string*> flags[] = {
        {"train.dataset", &f.dataset}, {"model.variant", &f.variant}, {"model.layers", &f.layers},
        {"model.levels", &f.levels},   {"train.seed", &f.seed},       {"train.steps", &f.steps},
        {"train.data_dir", &f.data_dir}, {"model.output", &f.output}};
    for (const auto& [key, value] : flags)
        if (!value->empty()) apply_setting(c, key, *value);
    return c;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cmd_train(const RunFlags& f, const std::string& out) {
    const RunConfig config = compose(f);
    config.model.validate();
    config.train.validate();
    const Dataset data = load_split(config, true);
    const TrainRun run = run_training(config, data, out);
    if (!run.rows.empty()) std::cout << metrics_header() << '\n' << format_metrics_row(run.rows.back()) << '\n';
    return 0;
}

int cmd_eval(const std::string& ckpt, std::size_t K, std::uint64_t seed, std::size_t test_size,
             const std::string& data_dir) {
    if (K == 0) throw ConfigError("--importance-samples must be at least 1");
    Restored r = restore_checkpoint(load_checkpoint(ckpt));
    if (test_size > 0) r.config.train.test_size = test_size;
    if (!data_dir.empty()) r.config.train.data_dir = data_dir;
    const Dataset test = load_split(r.config, false);
    const EvalReport report = evaluate_model(r.model, test.images, K, seed);
    std::cout << format_eval_report(report, r.model.config());
    return 0;
}

int cmd_sample(const std::string& ckpt, const std::string& grid, const std::string& vary, std::uint64_t seed,
               const std::string& out, bool no_row_cache) {
    const auto [rows, cols] = parse_grid(grid);
    const VaryLevel level = parse_vary_level(vary);
    const Restored r = restore_checkpoint(load_checkpoint(ckpt));
    if (level == VaryLevel::middle && r.model.config().latent_levels() != 2)
        throw ConfigError("--vary middle needs a two-level model");
    if (level == VaryLevel::top && r.model.config().latent_levels() == 0)
        throw ConfigError("--vary top needs a model with latents");
    const SampleOptions options{!no_row_cache};
    const NoiseBundle noise = NoiseBundle::from_seed(seed);
    const SampleRecord rec = level == VaryLevel::none ? sample_images(r.model, rows * cols, noise, options)
                                                      : sample_vary_level(r.model, level, rows, cols, noise, options);
    const double max_value = r.model.config().output == OutputFamily::softmax256 ? 255.0 : 1.0;
    write_pgm(rec.images, out, rows, cols, max_value);
    return 0;
}

int cmd_sweep(const RunFlags& f, const std::string& list, std::size_t seeds, std::size_t K, std::size_t jobs,
              const std::string& variants, const std::string& out) {
    SweepOptions options;
    options.base = compose(f);
    options.base.train.validate();
    options.layers = parse_size_list(list);
    options.seeds = seeds;
    options.importance_samples = K;
    options.jobs = jobs;
    options.variants.clear();
    std::istringstream vs(variants);
    for (std::string v; std::getline(vs, v, ',');) options.variants.push_back(parse_variant(v));
    if (options.variants.empty()) throw ConfigError("--variants is empty");
    const Dataset train_data = load_split(options.base, true);
    const Dataset test_data = load_split(options.base, false);

    std::ofstream csv(out);
    if (!csv) throw IoError("cannot write '" + out + "'");
    csv << sweep_header() << '\n' << std::flush;
    options.on_row = [&](const SweepRow& row) {
        csv << format_sweep_row(row) << '\n' << std::flush;
        std::cerr << format_sweep_row(row) << '\n';
    };
    run_sweep(options, train_data, test_data);
    return 0;
}

int cmd_breakdown(const std::string& in, const std::string& out) {
    const std::vector<BreakdownRow> rows = cost_breakdown(parse_sweep_csv(read_text(in)));
    std::ostringstream text;
    text << breakdown_header() << '\n';
    for (const BreakdownRow& b : rows) text << format_breakdown_row(b) << '\n';
    if (out.empty()) {
        std::cout << text.str();
    } else {
        std::ofstream file(out);
        if (!file || !(file << text.str())) throw IoError("cannot write '" + out + "'");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PixelVAE: train, evaluate and sample latent-variable PixelCNN models"};
    app.require_subcommand(1);

    RunFlags train_flags;
    std::string train_out;
    CLI::App* train = app.add_subcommand("train", "train a model; writes metrics.csv and model.ckpt under --out");
    add_run_flags(train, train_flags, true);
    train->add_option("--out", train_out, "output directory")->required();

    std::string eval_ckpt, eval_dir;
    std::size_t eval_k = 1000, eval_size = 0;
    std::uint64_t eval_seed = 0;
    CLI::App* eval = app.add_subcommand("eval", "ELBO and importance-sampled NLL on the test split");
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--importance-samples", eval_k, "importance samples per image")->capture_default_str();
    eval->add_option("--seed", eval_seed, "seed for the evaluation noise")->required();
    eval->add_option("--test-size", eval_size, "number of test images (default: from the checkpoint)");
    eval->add_option("--data-dir", eval_dir, "override the checkpoint's data directory");

    std::string sample_ckpt, sample_grid = "8x8", sample_vary = "none", sample_out;
    std::uint64_t sample_seed = 0;
    bool no_row_cache = false;
    CLI::App* sample = app.add_subcommand("sample", "ancestral samples tiled into a PGM");
    sample->add_option("--ckpt", sample_ckpt, "checkpoint file")->required();
    sample->add_option("--grid", sample_grid, "tile grid RxC")->capture_default_str();
    sample->add_option("--vary", sample_vary, "none | top | middle | pixel")->capture_default_str();
    sample->add_option("--seed", sample_seed, "sampling seed")->required();
    sample->add_option("--out", sample_out, "output .pgm path")->required();
    sample->add_flag("--no-row-cache", no_row_cache, "recompute the full image for every pixel");

    RunFlags sweep_flags;
    std::string sweep_list, sweep_out, sweep_variants = "pixelvae,pixelcnn-only";
    std::size_t sweep_seeds = 1, sweep_k = 0, sweep_jobs = 1;
    CLI::App* sweep = app.add_subcommand("sweep-layers", "train each variant at each PixelCNN depth");
    add_run_flags(sweep, sweep_flags, false);
    sweep->add_option("--layers-list", sweep_list, "comma-separated depths, e.g. 0,1,2,4")->required();
    sweep->add_option("--seeds", sweep_seeds, "number of seeds per cell")->capture_default_str();
    sweep->add_option("--variants", sweep_variants, "comma-separated variants")->capture_default_str();
    sweep->add_option("--importance-samples", sweep_k, "K for the nll column; 0 leaves it nan for latent models")
        ->capture_default_str();
    sweep->add_option("--jobs", sweep_jobs, "worker threads")->capture_default_str();
    sweep->add_option("--out", sweep_out, "output CSV")->required();

    std::string bd_in, bd_out;
    CLI::App* breakdown = app.add_subcommand("breakdown", "mean reconstruction and KL per depth from a sweep CSV");
    breakdown->add_option("--sweep-csv", bd_in, "sweep CSV")->required();
    breakdown->add_option("--out", bd_out, "output CSV (default: standard output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(train_flags, train_out);
        if (*eval) return cmd_eval(eval_ckpt, eval_k, eval_seed, eval_size, eval_dir);
        if (*sample) return cmd_sample(sample_ckpt, sample_grid, sample_vary, sample_seed, sample_out, no_row_cache);
        if (*sweep)
            return cmd_sweep(sweep_flags, sweep_list, sweep_seeds, sweep_k, sweep_jobs, sweep_variants, sweep_out);
        if (*breakdown) return cmd_breakdown(bd_in, bd_out);
    } catch (const ConfigError& e) {
        std::cerr << "pvae: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pvae: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
