#include "pvae/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "pvae/errors.hpp"
#include "pvae/ops.hpp"

namespace pvae {

namespace {

constexpr std::uint64_t kToyTestSalt = 0x7e57;

Tensor to_intensities(const Tensor& images) {
    std::vector<double> v(images.data().begin(), images.data().end());
    for (double& p : v) p = std::round(p * 255.0);
    return Tensor::from(images.shape(), std::move(v));
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep)) parts.push_back(cur);
    if (!text.empty() && text.back() == sep) parts.emplace_back();
    return parts;
}

std::size_t parse_count(const std::string& s, const char* what) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s.front() == '-') throw ConfigError(std::string("bad ") + what + " '" + s + "'");
    return static_cast<std::size_t>(v);
}

}  // namespace

Dataset load_split(const RunConfig& config, bool train) {
    const TrainConfig& t = config.train;
    const bool intensities = config.model.output == OutputFamily::softmax256;
    Dataset data;
    if (t.dataset == "toy") {
        const std::uint64_t seed = train ? t.binarization_seed : t.binarization_seed ^ kToyTestSalt;
        data = make_toy_dataset(train ? t.train_size : t.test_size, seed);
    } else if (t.dataset == "mnist") {
        const Binarization mode = intensities ? Binarization::none : t.binarization;
        data = load_mnist(t.data_dir, train, train ? t.train_size : t.test_size, mode, t.binarization_seed);
    } else {
        throw ConfigError("unknown dataset '" + t.dataset + "' (toy, mnist)");
    }
    if (intensities) data.images = to_intensities(data.images);
    return data;
}

ModelConfig fit_to_data(ModelConfig model, const Dataset& data) {
    if (data.count() == 0) throw ContractError("dataset is empty");
    model.channels = data.images.dim(1);
    model.height = data.images.dim(2);
    model.width = data.images.dim(3);
    return model;
}

TrainRun run_training(RunConfig config, const Dataset& train_data, const std::string& out_dir) {
    config.model = fit_to_data(config.model, train_data);
    config.model.validate();
    config.train.validate();
    TrainRun run{config, build_model(config.model, config.train.seed), {}, {}};
    run.state = initial_state(run.model);

    std::ofstream metrics;
    std::string ckpt_path;
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
        std::ofstream cfg(out_dir + "/config.txt");
        if (!cfg) throw IoError("cannot write " + out_dir + "/config.txt");
        cfg << to_text(run.config);
        metrics.open(out_dir + "/metrics.csv");
        if (!metrics) throw IoError("cannot write " + out_dir + "/metrics.csv");
        metrics << metrics_header() << '\n' << std::flush;
        ckpt_path = out_dir + "/model.ckpt";
    }
    TrainCallbacks callbacks;
    callbacks.on_metrics = [&](const MetricsRow& row) {
        run.rows.push_back(row);
        if (metrics.is_open()) metrics << format_metrics_row(row) << '\n' << std::flush;
    };
    if (!ckpt_path.empty())
        callbacks.on_checkpoint = [&](const TrainState& state) {
            save_checkpoint(make_checkpoint(run.config, run.model, state), ckpt_path);
        };
    train(run.model, train_data.images, run.config.train, run.state, callbacks);
    return run;
}

EvalReport evaluate_model(const Model& model, const Tensor& images, std::size_t K, std::uint64_t seed) {
    if (K == 0) throw ContractError("importance sampling needs K >= 1");
    EvalReport r;
    r.images = images.dim(0);
    r.importance_samples = K;
    r.elbo = evaluate_elbo(model, images, seed);
    if (model.config().latent_levels() == 0) {
        r.nll_importance = r.elbo.total;
    } else {
        const std::vector<double> nll = importance_nll(model, images, K, seed);
        double s = 0.0;
        for (double v : nll) s += v;
        r.nll_importance = s / static_cast<double>(nll.size());
    }
    r.bits_per_dim_elbo = bits_per_dim(r.elbo.total, model.config());
    r.bits_per_dim_nll = bits_per_dim(r.nll_importance, model.config());
    return r;
}

std::string format_eval_report(const EvalReport& r, const ModelConfig& config) {
    std::ostringstream out;
    out << "images=" << r.images << '\n';
    out << "importance_samples=" << r.importance_samples << '\n';
    out << "elbo=" << fmt(r.elbo.total) << '\n';
    out << "recon=" << fmt(r.elbo.reconstruction_nll) << '\n';
    for (std::size_t l = 0; l < r.elbo.kl_per_level.size(); ++l)
        out << "kl_" << l + 1 << '=' << fmt(r.elbo.kl_per_level[l]) << '\n';
    out << "nll_importance=" << fmt(r.nll_importance) << '\n';
    out << "gap=" << fmt(r.elbo.total - r.nll_importance) << '\n';
    if (config.output == OutputFamily::softmax256) {
        out << "bits_per_dim_elbo=" << fmt(r.bits_per_dim_elbo) << '\n';
        out << "bits_per_dim_nll=" << fmt(r.bits_per_dim_nll) << '\n';
    }
    return out.str();
}

std::vector<SweepRow> run_sweep(const SweepOptions& options, const Dataset& train_data, const Dataset& test_data) {
    if (options.layers.empty()) throw ConfigError("layer list is empty");
    if (options.seeds == 0) throw ConfigError("need at least one seed");
    struct Cell {
        std::size_t layers;
        Variant variant;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t k : options.layers)
        for (Variant v : options.variants)
            for (std::size_t s = 0; s < options.seeds; ++s) cells.push_back({k, v, options.base.train.seed + s});
    // Reject inconsistent cells before spending any compute.
    for (const Cell& cell : cells) {
        ModelConfig m = fit_to_data(options.base.model, train_data);
        m.variant = cell.variant;
        m.pixelcnn_layers = cell.layers;
        m.validate();
    }

    std::vector<SweepRow> rows(cells.size());
    std::vector<bool> done(cells.size(), false);
    std::size_t emitted = 0;
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::exception_ptr failure;

    auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            {
                const std::lock_guard lock(mutex);
                if (failure) return;
            }
            try {
                const Cell& cell = cells[i];
                RunConfig config = options.base;
                config.model.variant = cell.variant;
                config.model.pixelcnn_layers = cell.layers;
                config.train.seed = cell.seed;
                const TrainRun run = run_training(config, train_data);
                const ElboBreakdown e = evaluate_elbo(run.model, test_data.images, cell.seed);
                SweepRow row{cell.layers, cell.variant, cell.seed, e.total,
                             std::numeric_limits<double>::quiet_NaN(), e.reconstruction_nll, 0.0, 0.0};
                if (!e.kl_per_level.empty()) row.kl_1 = e.kl_per_level[0];
                if (e.kl_per_level.size() > 1) row.kl_2 = e.kl_per_level[1];
                if (run.model.config().latent_levels() == 0)
                    row.nll = e.total;
                else if (options.importance_samples > 0)
                    row.nll = evaluate_model(run.model, test_data.images, options.importance_samples, cell.seed)
                                  .nll_importance;
                const std::lock_guard lock(mutex);
                rows[i] = row;
                done[i] = true;
                while (emitted < cells.size() && done[emitted]) {
                    if (options.on_row) options.on_row(rows[emitted]);
                    ++emitted;
                }
            } catch (...) {
                const std::lock_guard lock(mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, cells.size()));
    if (jobs == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

std::string sweep_header() { return "k,variant,seed,elbo,nll,recon,kl_1,kl_2"; }

std::string format_sweep_row(const SweepRow& r) {
    return std::to_string(r.layers) + ',' + variant_name(r.variant) + ',' + std::to_string(r.seed) + ',' +
           fmt(r.elbo) + ',' + fmt(r.nll) + ',' + fmt(r.recon) + ',' + fmt(r.kl_1) + ',' + fmt(r.kl_2);
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("sweep table is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != sweep_header()) throw FormatError("sweep table header must be '" + sweep_header() + "'");
    std::vector<SweepRow> rows;
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> f = split(line, ',');
        const std::string where = "sweep table line " + std::to_string(number);
        if (f.size() != 8) throw FormatError(where + ": expected 8 fields");
        SweepRow r;
        try {
            r.layers = parse_count(f[0], "layer count");
            r.variant = parse_variant(f[1]);
            r.seed = parse_count(f[2], "seed");
        } catch (const ConfigError& e) {
            throw FormatError(where + ": " + e.what());
        }
        double* numbers[] = {&r.elbo, &r.nll, &r.recon, &r.kl_1, &r.kl_2};
        for (std::size_t i = 0; i < 5; ++i) {
            const std::string& s = f[3 + i];
            char* end = nullptr;
            *numbers[i] = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size()) throw FormatError(where + ": bad number '" + s + "'");
        }
        rows.push_back(r);
    }
    if (rows.empty()) throw FormatError("sweep table has no rows");
    return rows;
}

std::vector<BreakdownRow> cost_breakdown(const std::vector<SweepRow>& rows) {
    std::vector<BreakdownRow> out;
    for (const SweepRow& r : rows) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const BreakdownRow& b) { return b.layers == r.layers && b.variant == r.variant; });
        if (it == out.end()) it = out.insert(out.end(), BreakdownRow{r.layers, r.variant, 0, 0.0, 0.0, 0.0});
        it->runs += 1;
        it->recon += r.recon;
        it->kl += r.kl_1 + r.kl_2;
        it->elbo += r.elbo;
    }
    for (BreakdownRow& b : out) {
        const double n = static_cast<double>(b.runs);
        b.recon /= n;
        b.kl /= n;
        b.elbo /= n;
    }
    return out;
}

std::string breakdown_header() { return "k,variant,runs,recon,kl,elbo"; }

std::string format_breakdown_row(const BreakdownRow& b) {
    return std::to_string(b.layers) + ',' + variant_name(b.variant) + ',' + std::to_string(b.runs) + ',' +
           fmt(b.recon) + ',' + fmt(b.kl) + ',' + fmt(b.elbo);
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    for (const std::string& part : split(text, ',')) out.push_back(parse_count(part, "list entry"));
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
    const std::size_t x = text.find('x');
    if (x == std::string::npos) throw ConfigError("grid must look like RxC, got '" + text + "'");
    const std::size_t r = parse_count(text.substr(0, x), "grid rows");
    const std::size_t c = parse_count(text.substr(x + 1), "grid columns");
    if (r == 0 || c == 0) throw ConfigError("grid must be non-empty");
    return {r, c};
}

}  // namespace pvae
