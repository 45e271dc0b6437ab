#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pvae/distributions.hpp"
#include "pvae/nn_ops.hpp"
#include "pvae/tensor.hpp"

namespace pvae {

enum class Variant { vae_only, pixelcnn_only, pixelvae, gated_pixelvae, gated_no_upsampling };
enum class OutputFamily { bernoulli, softmax256 };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // throws ConfigError
std::string output_name(OutputFamily f);
OutputFamily parse_output(const std::string& name);  // throws ConfigError

// Architecture description. The encoder trunk has `stages` stride-2 3x3
// convolutions (trunk_width, 2 * trunk_width, ...) ending at the trunk
// resolution H / 2^stages; with stages == 0 a single stride-1 conv is used.
// The decoder mirrors it with 4x4 stride-2 transposed convolutions.
//
// Latent levels:
//   levels == 1: z1 is a flat vector of `latent1` dims.
//   levels == 2: z1 is a [latent1, h_t, w_t] map at trunk resolution and z2
//                is a flat vector of `latent2` dims (the 1x1 top level).
struct ModelConfig {
    std::size_t channels = 1;
    std::size_t height = 28;
    std::size_t width = 28;
    std::size_t levels = 1;
    std::size_t stages = 2;
    std::size_t trunk_width = 32;
    std::size_t latent1 = 32;
    std::size_t latent2 = 64;
    std::size_t pixelcnn_layers = 1;
    std::size_t prior_layers = 2;
    std::size_t hidden = 16;            // masked stack width
    std::size_t feature_channels = 8;   // upsampled decoder feature maps
    std::size_t kernel = 5;
    Variant variant = Variant::pixelvae;
    OutputFamily output = OutputFamily::bernoulli;

    // Throws ConfigError on inconsistent settings.
    void validate() const;

    // 0 for pixelcnn-only, otherwise `levels`.
    std::size_t latent_levels() const;
    bool upsampling() const;
    std::size_t classes() const { return output == OutputFamily::softmax256 ? 256 : 1; }
    std::size_t trunk_height() const { return height >> stages; }
    std::size_t trunk_width_px() const { return width >> stages; }
    std::size_t trunk_channels() const;
    // Shape of z_level (1-based) for a batch of n.
    Shape latent_shape(std::size_t level, std::size_t n) const;
    Shape image_shape(std::size_t n) const { return {n, channels, height, width}; }
};

class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    const ParameterStore& parameters() const { return store_; }
    ParameterStore& parameters() { return store_; }
    const Tensor& param(const std::string& name) const { return store_.get(name); }

    const MaskedStack* pixel_stack() const { return config_.pixelcnn_layers > 0 ? &pixel_stack_ : nullptr; }
    const MaskedStack* prior_stack() const { return config_.latent_levels() == 2 ? &prior_stack_ : nullptr; }

private:
    ModelConfig config_;
    std::uint64_t seed_;
    ParameterStore store_;
    MaskedStack pixel_stack_;
    MaskedStack prior_stack_;
};

// Deterministic initialization: identical (config, seed) gives bit-identical parameters.
Model build_model(const ModelConfig& config, std::uint64_t seed);

struct LatentLevel {
    std::size_t index = 1;
    DiagGaussianParams posterior;
    Tensor z;
};

// Posterior parameters for every latent level (index 0 holds level 1).
// Empty for pixelcnn-only.
std::vector<DiagGaussianParams> encode(const Model& model, const Tensor& x);

// Everything the pixel decoder derives from z1 alone: the upsampled feature
// maps (upsampling variants) or the flat gating condition (no-upsampling).
struct DecoderContext {
    Tensor features;   // [N, feature_channels, H, W] or undefined
    Tensor condition;  // [N, D] or undefined
    std::size_t batch = 0;
};

DecoderContext decoder_context(const Model& model, const Tensor& z1, std::size_t batch);

// Logits for rows [row0, row0 + rows) given those rows of the teacher image.
// Shape [N, C * classes, rows, W]. With rows == H and row0 == 0 this is the
// full teacher-forced pass.
Tensor decode_rows(const Model& model, const Tensor& x_rows, const DecoderContext& context, std::size_t row0);

// Teacher-forced per-pixel logits, [N, C * classes, H, W]. z1 is ignored
// (and may be undefined) for pixelcnn-only models.
Tensor decode_pixel_logits(const Model& model, const Tensor& x_teacher, const Tensor& z1);

// p(z1 | z2) over the level-1 map: autoregressive in raster order over
// locations, channels independent within a location. Throws ContractError
// unless the model has two latent levels.
DiagGaussianParams latent_prior_params(const Model& model, const Tensor& z_above, const Tensor& z_teacher);

// Unit Gaussian over the top level for a batch of n.
DiagGaussianParams top_prior(const Model& model, std::size_t n);

// Output-family negative log-likelihood per image, [N].
Tensor reconstruction_nll(const Model& model, const Tensor& logits, const Tensor& x);

}  // namespace pvae
