// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance [fast | mnist | all | <criterion numbers>...]
//
// "fast" covers the invariant and oracle suites (1-5, 9); "mnist" trains on
// the bundled MNIST subset (6, 7, 8, 10) and takes tens of minutes on one core.
// PVAE_MNIST_DIR overrides the data directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pvae/autograd.hpp"
#include "pvae/checkpoint.hpp"
#include "pvae/cli.hpp"
#include "pvae/distributions.hpp"
#include "pvae/errors.hpp"
#include "pvae/nn_ops.hpp"
#include "pvae/objective.hpp"
#include "pvae/ops.hpp"
#include "pvae/sampler.hpp"
#include "test_util.hpp"

using namespace pvae;
using namespace pvae::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, const char* f = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Variant kAllVariants[] = {Variant::vae_only, Variant::pixelcnn_only, Variant::pixelvae,
                                Variant::gated_pixelvae, Variant::gated_no_upsampling};

std::size_t layers_for(Variant v, std::size_t k) { return v == Variant::vae_only ? 0 : k; }

// ---------------------------------------------------------------- criterion 1

Outcome gradient_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    using Fn = std::function<Tensor(const Tensor&)>;
    const Shape s4{2, 3, 4, 4};
    const Tensor other = random_tensor(s4, 901);
    const Tensor bias = random_tensor({3}, 902);
    const Tensor row_bias = random_tensor({1, 3, 4, 4}, 903);
    const Tensor dense_w = random_tensor({5, 48}, 904);
    const Tensor conv_w = random_tensor({4, 3, 3, 3}, 905);
    const Tensor convt_w = random_tensor({3, 2, 4, 4}, 906);
    const Tensor mconv_w = random_tensor({4, 3, 5, 5}, 907);
    const Tensor hconv_w = random_tensor({4, 3, 1, 5}, 908);
    const Tensor cond = random_tensor({2, 5}, 909);
    const GatedBlockParams dense_gate{ConditionKind::linear, random_tensor({4, 5}, 910), random_tensor({4}, 911)};
    const GatedBlockParams spatial_gate{ConditionKind::spatial, random_tensor({4, 3, 1, 1}, 912),
                                        random_tensor({4}, 913)};
    const Tensor targets01 = random_binary(s4, 914);
    const Tensor targets_cat = Tensor::from({2, 1, 1, 2}, {0.0, 255.0, 17.0, 128.0});
    const Tensor noise = random_tensor(s4, 915);
    const Tensor mu_other = random_tensor(s4, 916), lv_other = mul(random_tensor(s4, 917), 0.5);
    const Tensor mix4 = random_tensor({2, 4, 4, 4}, 918);
    const Tensor mix2 = random_tensor({2, 2, 8, 8}, 919);

    const std::vector<std::pair<const char*, Fn>> ops = {
        {"add", [&](const Tensor& x) { return sum(mul(add(x, other), other)); }},
        {"add_scalar", [&](const Tensor& x) { return sum(mul(add(x, 0.5), other)); }},
        {"sub", [&](const Tensor& x) { return sum(mul(sub(other, x), other)); }},
        {"mul", [&](const Tensor& x) { return sum(mul(x, x)); }},
        {"mul_scalar", [&](const Tensor& x) { return sum(mul(mul(x, -1.5), other)); }},
        {"neg", [&](const Tensor& x) { return sum(mul(neg(x), other)); }},
        {"exp", [](const Tensor& x) { return sum(exp(x)); }},
        {"tanh", [&](const Tensor& x) { return sum(mul(tanh(x), other)); }},
        {"sigmoid", [&](const Tensor& x) { return sum(mul(sigmoid(x), other)); }},
        {"relu", [&](const Tensor& x) { return sum(mul(relu(x), other)); }},
        {"softplus", [&](const Tensor& x) { return sum(mul(softplus(x), other)); }},
        {"square", [&](const Tensor& x) { return sum(mul(square(x), other)); }},
        {"clamp", [&](const Tensor& x) { return sum(mul(clamp(x, -0.7, 0.9), other)); }},
        {"sum", [](const Tensor& x) { return sum(square(x)); }},
        {"mean", [](const Tensor& x) { return mean(square(x)); }},
        {"sum_per_batch", [](const Tensor& x) { return sum(square(sum_per_batch(x))); }},
        {"add_channel_bias", [&](const Tensor& x) { return sum(square(add_channel_bias(x, bias))); }},
        {"add_batch_bias", [&](const Tensor& x) { return sum(square(add_batch_bias(x, row_bias))); }},
        {"linear", [&](const Tensor& x) { return sum(square(linear(x.reshape({2, 48}), dense_w, Tensor{}))); }},
        {"expand_spatial",
         [&](const Tensor& x) {
             return sum(mul(expand_spatial(slice_rows(x, 0, 1).reshape({2, 12}), 2, 2),
                            other.reshape({2, 12, 2, 2})));
         }},
        {"concat/slice_channels",
         [&](const Tensor& x) {
             return sum(mul(concat_channels({slice_channels(x, 2, 1), slice_channels(x, 0, 2)}), other));
         }},
        {"slice_rows", [&](const Tensor& x) { return sum(square(slice_rows(x, 1, 2))); }},
        {"conv2d stride 2",
         [&](const Tensor& x) { return sum(square(conv2d(x, ConvSpec{3, 4, 3, 3, 2, 1}, conv_w, Tensor{}))); }},
        {"conv2d_transposed",
         [&](const Tensor& x) {
             return sum(mul(conv2d_transposed(slice_channels(x, 0, 3), ConvSpec{3, 2, 4, 4, 2, 1}, convt_w, Tensor{}),
                            mix2));
         }},
        {"masked_conv2d vertical A",
         [&](const Tensor& x) {
             return sum(mul(masked_conv2d(x, MaskSpec{MaskKind::A, 5, 5, MaskStack::vertical, 0},
                                          ConvSpec{3, 4, 5, 5, 1, 2}, mconv_w, Tensor{}),
                            mix4));
         }},
        {"masked_conv2d single B",
         [&](const Tensor& x) {
             return sum(mul(masked_conv2d(x, MaskSpec{MaskKind::B, 5, 5, MaskStack::single, 1},
                                          ConvSpec{3, 4, 5, 5, 1, 2}, mconv_w, Tensor{}),
                            mix4));
         }},
        {"masked_conv2d horizontal",
         [&](const Tensor& x) {
             return sum(mul(masked_conv2d(x, MaskSpec{MaskKind::B, 1, 5, MaskStack::horizontal, 0},
                                          ConvSpec{3, 4, 1, 5, 1, 2}, hconv_w, Tensor{}),
                            mix4));
         }},
        {"gated_activation",
         [&](const Tensor& x) {
             return sum(mul(gated_activation(concat_channels({x, slice_channels(other, 0, 1)}), Tensor{}),
                            slice_channels(other, 0, 2)));
         }},
        {"gated_block dense",
         [&](const Tensor& x) {
             return sum(mul(gated_block(concat_channels({x, slice_channels(other, 0, 1)}), cond, dense_gate),
                            slice_channels(other, 0, 2)));
         }},
        {"gated_block spatial",
         [&](const Tensor& x) {
             return sum(mul(gated_block(concat_channels({x, slice_channels(other, 0, 1)}), x, spatial_gate),
                            slice_channels(other, 0, 2)));
         }},
        {"gaussian_sample",
         [&](const Tensor& x) { return sum(square(gaussian_sample(DiagGaussianParams(x, mul(x, 0.3)), noise))); }},
        {"gaussian_log_prob",
         [&](const Tensor& x) { return sum(gaussian_log_prob(other, DiagGaussianParams(x, mul(x, 0.5)))); }},
        {"gaussian_kl q",
         [&](const Tensor& x) {
             return sum(gaussian_kl(DiagGaussianParams(x, mul(x, 0.5)), DiagGaussianParams(mu_other, lv_other)));
         }},
        {"gaussian_kl p",
         [&](const Tensor& x) {
             return sum(gaussian_kl(DiagGaussianParams(mu_other, lv_other), DiagGaussianParams(x, mul(x, 0.5))));
         }},
        {"bernoulli_nll", [&](const Tensor& x) { return sum(bernoulli_nll(x, targets01)); }},
    };

    double worst = 0.0;
    std::string worst_name;
    std::size_t checks = 0;
    auto probe = [&](const char* name, const Fn& f, const Shape& shape) {
        for (std::uint64_t p = 0; p < 10; ++p) {
            const double e = finite_difference_check(f, random_tensor(shape, 5000 + p), 1e-5);
            ++checks;
            if (e > worst) worst = e, worst_name = name;
        }
    };
    for (const auto& [name, f] : ops) probe(name, f, s4);
    probe("categorical_nll", [&](const Tensor& x) { return sum(categorical_nll(x, targets_cat)); }, {2, 256, 1, 2});

    // The full ELBO, differentiated with respect to every parameter tensor. The
    // step is 1e-6: with 1e-5 the stencil of one random point straddles a ReLU
    // kink, while round-off stays near 1e-9 at these loss magnitudes.
    for (Variant v : kAllVariants)
        for (std::size_t levels : {1, 2}) {
            ModelConfig c = tiny_config(v, layers_for(v, 2), levels);
            c.height = c.width = 4;
            c.stages = 1;
            c.prior_layers = 1;
            for (std::uint64_t p = 0; p < 10; ++p) {
                Model m = build_model(c, 700 + p);
                perturb_parameters(m, 0.1, 800 + p);
                const Tensor x = random_binary({2, 1, 4, 4}, 900 + p);
                const std::vector<Tensor> eps = latent_noise(c, 2, CounterRng(1000 + p, 0));
                for (const auto& [name, e] : parameter_fd_errors(m, [&] { return elbo(m, x, eps).loss; }, 1e-6, 3)) {
                    ++checks;
                    if (e > worst) worst = e, worst_name = "elbo/" + variant_name(v) + "/" + name;
                }
            }
        }
    const double secs = seconds_since(t0);
    return {worst < 1e-4 && secs < 120.0,
            num(static_cast<double>(ops.size() + 1), "%.0f") + " ops + ELBO over 10 model configs, 10 points each (" +
                std::to_string(checks) + " checks); worst error " + num(worst) + " at " + worst_name + "; " +
                num(secs, "%.1f") + " s"};
}

// ---------------------------------------------------------------- criterion 2

Outcome causality_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t violations = 0, probes = 0;
    for (Variant v : kAllVariants)
        for (std::size_t k : {1, 2, 4})
            for (std::size_t levels : {1, 2}) {
                const ModelConfig c = tiny_config(v, layers_for(v, k), levels);
                Model m = build_model(c, 10 + k);
                perturb_parameters(m, 0.1, 11 + k);
                const Tensor x = random_binary({1, 1, 8, 8}, 20 + k);
                const Tensor z1 = c.latent_levels() > 0 ? random_tensor(c.latent_shape(1, 1), 30 + k) : Tensor{};
                for (std::size_t i = 0; i < 8; ++i)
                    for (std::size_t j = 0; j < 8; ++j, ++probes)
                        for (std::size_t p : pixel_dependencies(m, x, z1, i, j)) violations += p >= i * 8 + j;
            }
    for (std::size_t k : {1, 2, 4}) {
        ModelConfig c = tiny_config(Variant::gated_pixelvae, 1, 2);
        c.prior_layers = k;
        c.height = c.width = 16;
        Model m = build_model(c, 20 + k);
        perturb_parameters(m, 0.1, 21 + k);
        const Tensor z2 = random_tensor(c.latent_shape(2, 1), 1);
        const Tensor z1 = random_tensor(c.latent_shape(1, 1), 2);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j, ++probes)
                for (std::size_t p : latent_dependencies(m, z2, z1, i, j)) violations += p >= i * 4 + j;
    }
    const double secs = seconds_since(t0);
    return {violations == 0 && secs < 120.0,
            std::to_string(probes) + " output locations probed (pixel logits and latent prior), " +
                std::to_string(violations) + " non-causal dependencies above 1e-12; " + num(secs, "%.1f") + " s"};
}

// ---------------------------------------------------------------- criterion 3

Outcome receptive_field() {
    const std::size_t n = 16;
    std::size_t cases = 0;
    bool exact = true, contained = true;
    for (Variant v : {Variant::pixelvae, Variant::gated_pixelvae, Variant::gated_no_upsampling})
        for (std::size_t k : {1, 2, 3}) {
            ModelConfig c = tiny_config(v, k);
            c.height = c.width = n;
            Model m = build_model(c, 40 + k);
            perturb_parameters(m, 0.1, 43 + k);
            const Tensor x = random_binary({1, 1, n, n}, 41);
            const Tensor z1 = random_tensor(c.latent_shape(1, 1), 42);
            for (const auto& [ti, tj] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 8}, {3, 12}, {15, 0}, {0, 5}}) {
                std::set<std::size_t> cone;
                for (std::size_t a = 0; a < n; ++a)
                    for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t di = a > ti ? a - ti : ti - a, dj = b > tj ? b - tj : tj - b;
                        if (a * n + b < ti * n + tj && di <= 2 * k && dj <= 2 * k) cone.insert(a * n + b);
                    }
                const std::set<std::size_t> deps = pixel_dependencies(m, x, z1, ti, tj);
                ++cases;
                if (k == 1) exact &= deps == cone;
                contained &= std::includes(cone.begin(), cone.end(), deps.begin(), deps.end());
            }
        }
    return {exact && contained, std::to_string(cases) + " probes (3 variants, k=1..3, 16x16): k=1 equals the cone " +
                                    (exact ? "exactly" : "NOT exactly") + ", all contained in the 2k cone: " +
                                    (contained ? "yes" : "no")};
}

// ---------------------------------------------------------------- criterion 4

Outcome record_and_replay() {
    std::size_t runs = 0, mismatches = 0;
    for (Variant v : kAllVariants)
        for (std::size_t levels : {1, 2})
            for (std::uint64_t seed = 1; seed <= 20; ++seed) {
                const ModelConfig c = tiny_config(v, layers_for(v, 2), levels);
                Model m = build_model(c, 100 + seed);
                perturb_parameters(m, 0.3, 200 + seed);
                for (bool cache : {false, true}) {
                    const SampleRecord r = sample_images(m, 2, NoiseBundle::from_seed(seed), SampleOptions{cache});
                    const Tensor z1 = r.latents.empty() ? Tensor{} : r.latents[0];
                    ++runs;
                    mismatches += !bit_equal(decode_pixel_logits(m, r.images, z1), r.logits);
                }
            }
    return {mismatches == 0, std::to_string(runs) +
                                 " sampling runs (5 variants x 2 level counts x 20 seeds x full/row-window), " +
                                 std::to_string(mismatches) + " replays differing in any bit"};
}

// ---------------------------------------------------------------- criterion 5

Outcome toy_exactness() {
    Model m = build_model(two_pixel_config(), 51);
    scale_parameters(m, 1.5);
    double worst_is = 0.0, min_slack = 1e300;
    for (const auto& pixels : std::vector<std::vector<double>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}) {
        const Tensor x = Tensor::from({1, 1, 1, 2}, pixels);
        const double nll = quadrature_nll(m, x);
        min_slack = std::min(min_slack, quadrature_neg_elbo(m, x) - nll);
        worst_is = std::max(worst_is, std::abs(importance_nll(m, x, 10000, 7, 500)[0] - nll));
    }
    Model chain = build_model(chain_config(), 61);
    scale_parameters(chain, 2.0);
    const ChainComparison r = derivation_chain(chain, Tensor::from({1, 1, 1, 1}, {1.0}), 100000, 5);
    const double z = std::abs(r.line_one - r.final_line) / r.standard_error;
    return {worst_is < 0.01 && min_slack >= 0.0 && z < 3.0,
            "max |IS(K=1e4) - quadrature| = " + num(worst_is) + " nat over 4 images; min (-ELBO - NLL) = " +
                num(min_slack) + "; derivation chain differs by " + num(z, "%.2f") + " SE"};
}

// ---------------------------------------------------------------- criterion 9

std::vector<std::uint8_t> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism_and_persistence() {
    RunConfig rc;
    rc.model = tiny_config(Variant::gated_pixelvae, 2, 2);
    rc.train.dataset = "toy";
    rc.train.train_size = 128;
    rc.train.steps = 60;
    rc.train.eval_interval = 10;
    rc.train.checkpoint_interval = 30;
    rc.train.log_seconds = false;
    rc.train.seed = 4;
    const Dataset data = load_split(rc, true);
    const auto dir = std::filesystem::temp_directory_path() / "pvae_acceptance";
    std::filesystem::remove_all(dir);
    run_training(rc, data, (dir / "a").string());
    const TrainRun full = run_training(rc, data, (dir / "b").string());
    const bool same_metrics = file_bytes((dir / "a" / "metrics.csv").string()) ==
                              file_bytes((dir / "b" / "metrics.csv").string());
    const bool same_ckpt = file_bytes((dir / "a" / "model.ckpt").string()) ==
                           file_bytes((dir / "b" / "model.ckpt").string());

    // Interrupt at step 30 and resume from the checkpoint file.
    RunConfig first = rc;
    first.train.steps = 30;
    run_training(first, data, (dir / "c").string());
    Restored r = restore_checkpoint(load_checkpoint((dir / "c" / "model.ckpt").string()));
    r.config.train.steps = 60;
    std::vector<std::string> resumed;
    TrainCallbacks cb;
    cb.on_metrics = [&](const MetricsRow& row) { resumed.push_back(format_metrics_row(row)); };
    train(r.model, data.images, r.config.train, r.state, cb);
    std::vector<std::string> expected;
    for (const MetricsRow& row : full.rows)
        if (row.step > 30) expected.push_back(format_metrics_row(row));
    bool same_params = true;
    for (std::size_t i = 0; i < full.model.parameters().size(); ++i)
        same_params &= bit_equal(full.model.parameters().entries()[i].second, r.model.parameters().entries()[i].second);
    const bool resume_ok = resumed == expected && same_params;

    // save -> load -> save.
    const std::string p1 = (dir / "rt1.ckpt").string(), p2 = (dir / "rt2.ckpt").string();
    save_checkpoint(make_checkpoint(full.config, full.model, full.state), p1);
    save_checkpoint(load_checkpoint(p1), p2);
    const Restored back = restore_checkpoint(load_checkpoint(p1));
    bool bitwise = file_bytes(p1) == file_bytes(p2);
    for (std::size_t i = 0; i < full.model.parameters().size(); ++i)
        bitwise &= bit_equal(full.model.parameters().entries()[i].second, back.model.parameters().entries()[i].second);
    std::filesystem::remove_all(dir);
    const auto yn = [](bool b) { return b ? "yes" : "no"; };
    return {same_metrics && same_ckpt && resume_ok && bitwise,
            std::string("repeat run metrics/checkpoint identical: ") + yn(same_metrics) + "/" + yn(same_ckpt) +
                "; resume at step 30 replays " + std::to_string(expected.size()) + " rows and parameters: " +
                yn(resume_ok) + "; save/load/save bitwise: " + yn(bitwise)};
}

// ---------------------------------------------------------------- MNIST criteria

std::string mnist_dir() {
    if (const char* env = std::getenv("PVAE_MNIST_DIR")) return env;
    return PVAE_SOURCE_DIR "/data/mnist";
}

RunConfig mnist_base() {
    RunConfig rc;
    rc.train.dataset = "mnist";
    rc.train.data_dir = mnist_dir();
    rc.train.steps = 2000;
    rc.train.log_seconds = false;
    rc.train.seed = 1;
    return rc;
}

struct MnistData {
    Dataset train, test;
};

const MnistData& mnist_data() {
    static const MnistData d = [] {
        const RunConfig rc = mnist_base();
        return MnistData{load_split(rc, true), load_split(rc, false)};
    }();
    return d;
}

struct SweepResult {
    std::vector<SweepRow> rows;
    double seconds = 0.0;
};

const SweepResult& layer_sweep() {
    static const SweepResult result = [] {
        SweepOptions o;
        o.base = mnist_base();
        o.layers = {0, 1, 2};
        o.seeds = 3;
        o.on_row = [](const SweepRow& r) { std::cerr << "  sweep " << format_sweep_row(r) << '\n'; };
        const auto t0 = std::chrono::steady_clock::now();
        SweepResult s;
        s.rows = run_sweep(o, mnist_data().train, mnist_data().test);
        s.seconds = seconds_since(t0);
        return s;
    }();
    return result;
}

const SweepRow& cell(const std::vector<SweepRow>& rows, std::size_t k, Variant v, std::uint64_t seed) {
    for (const SweepRow& r : rows)
        if (r.layers == k && r.variant == v && r.seed == seed) return r;
    throw ContractError("sweep cell missing");
}

// The two-level model shared by the bound-ordering and sampling criteria.
const Model& two_level_model() {
    static const Model model = [] {
        RunConfig rc = mnist_base();
        rc.model.variant = Variant::gated_pixelvae;
        rc.model.levels = 2;
        rc.model.pixelcnn_layers = 2;
        rc.train.kl_warmup = 1000;  // without warm-up both levels collapse within 2000 steps
        const auto t0 = std::chrono::steady_clock::now();
        TrainRun run = run_training(rc, mnist_data().train);
        const MetricsRow& last = run.rows.back();
        std::cerr << "  two-level model trained in " << num(seconds_since(t0), "%.0f")
                  << " s; last interval elbo " << num(last.elbo) << " (kl_1 " << num(last.kl_1) << ", kl_2 "
                  << num(last.kl_2) << ")\n";
        return std::move(run.model);
    }();
    return model;
}

Outcome bound_ordering() {
    const Model& m = two_level_model();
    const std::size_t n = 50;
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    const Tensor x = gather_images(mnist_data().test.images, idx);
    const EvalReport r = evaluate_model(m, x, 1000, 17);
    return {r.nll_importance <= r.elbo.total,
            "two-level gated model, " + std::to_string(n) + " test images: IS NLL (K=1000) " +
                num(r.nll_importance) + " vs ELBO " + num(r.elbo.total) + " nats, gap " +
                num(r.elbo.total - r.nll_importance)};
}

Outcome layer_sweep_elbo_trend() {
    const SweepResult& s = layer_sweep();
    bool ok = s.seconds <= 3600.0;
    std::ostringstream d;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const double e0 = cell(s.rows, 0, Variant::pixelvae, seed).elbo;
        const double e1 = cell(s.rows, 1, Variant::pixelvae, seed).elbo;
        const double e2 = cell(s.rows, 2, Variant::pixelvae, seed).elbo;
        const double c1 = cell(s.rows, 1, Variant::pixelcnn_only, seed).elbo;
        const double c2 = cell(s.rows, 2, Variant::pixelcnn_only, seed).elbo;
        ok &= e1 <= e0 - 2.0 && e1 < c1 && e2 < c2;
        d << "seed " << seed << ": pixelvae k0/k1/k2 " << num(e0, "%.2f") << "/" << num(e1, "%.2f") << "/"
          << num(e2, "%.2f") << ", pixelcnn-only k1/k2 " << num(c1, "%.2f") << "/" << num(c2, "%.2f") << "; ";
    }
    d << "sweep " << num(s.seconds / 60.0, "%.1f") << " min";
    return {ok, d.str()};
}

Outcome layer_sweep_kl_trend() {
    const SweepResult& s = layer_sweep();
    bool ok = true;
    double worst_sum = 0.0;
    for (const SweepRow& r : s.rows) worst_sum = std::max(worst_sum, std::abs(r.recon + r.kl_1 + r.kl_2 - r.elbo));
    ok &= worst_sum <= 1e-6;
    std::ostringstream d;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const SweepRow& a = cell(s.rows, 0, Variant::pixelvae, seed);
        const SweepRow& b = cell(s.rows, 1, Variant::pixelvae, seed);
        ok &= b.kl_1 + b.kl_2 < a.kl_1 + a.kl_2;
        d << "seed " << seed << ": KL k0 " << num(a.kl_1 + a.kl_2, "%.2f") << " -> k1 " << num(b.kl_1 + b.kl_2, "%.2f")
          << "; ";
    }
    d << "max |recon + KL - ELBO| = " << num(worst_sum);
    return {ok, d.str()};
}

double mean_pairwise_hamming(const Tensor& images) {
    const std::size_t n = images.dim(0), d = images.numel() / n;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b, ++pairs)
            for (std::size_t i = 0; i < d; ++i) total += images[a * d + i] != images[b * d + i];
    return total / static_cast<double>(pairs);
}

Outcome vary_level_similarity() {
    const Model& m = two_level_model();
    bool ok = true;
    std::ostringstream d;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const NoiseBundle noise = NoiseBundle::from_seed(seed);
        const double hp = mean_pairwise_hamming(sample_vary_level(m, VaryLevel::pixel, 4, 4, noise, {true}).images);
        const double ht = mean_pairwise_hamming(sample_vary_level(m, VaryLevel::top, 4, 4, noise, {true}).images);
        ok &= hp < ht;
        d << "seed " << seed << ": vary pixel " << num(hp, "%.1f") << " vs vary top " << num(ht, "%.1f") << "; ";
    }
    std::string text = d.str();
    return {ok, "mean pairwise Hamming distance over 4x4 grids, " + text.substr(0, text.size() - 2)};
}

struct Criterion {
    int id;
    const char* group;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "fast", "gradient suite", gradient_suite},
        {2, "fast", "causality suite", causality_suite},
        {3, "fast", "receptive-field bound", receptive_field},
        {4, "fast", "record-and-replay", record_and_replay},
        {5, "fast", "toy-model exactness", toy_exactness},
        {6, "mnist", "bound ordering", bound_ordering},
        {7, "mnist", "layer-sweep ELBO trend", layer_sweep_elbo_trend},
        {8, "mnist", "layer-sweep KL trend", layer_sweep_kl_trend},
        {9, "fast", "determinism & persistence", determinism_and_persistence},
        {10, "mnist", "vary-level sample similarity", vary_level_similarity},
    };
    std::set<int> selected;
    for (int a = 1; a < argc; ++a) {
        const std::string arg = argv[a];
        for (const Criterion& c : criteria)
            if (arg == "all" || arg == c.group || arg == std::to_string(c.id)) selected.insert(c.id);
    }
    if (argc == 1)
        for (const Criterion& c : criteria) selected.insert(c.id);
    if (selected.empty()) {
        std::cerr << "usage: acceptance [fast | mnist | all | <criterion>...]\n";
        return 2;
    }

    int failed = 0;
    for (const Criterion& c : criteria) {
        if (!selected.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
                  << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
