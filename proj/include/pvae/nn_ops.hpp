#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pvae/tensor.hpp"

namespace pvae {

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;

    // floor((in + 2 * padding - kernel) / stride) + 1; throws ShapeError when < 1.
    std::size_t output_size(std::size_t in, std::size_t kernel) const;
    // (in - 1) * stride - 2 * padding + kernel
    std::size_t transposed_output_size(std::size_t in, std::size_t kernel) const;
};

// Cross-correlation. input [N, in, H, W], weights [out, in, kh, kw], bias [out]
// (bias may be undefined).
Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias);

// Adjoint of conv2d. input [N, in, h, w], weights [in, out, kh, kw], bias [out].
// With spec_t = {in: b, out: a} and spec = {in: a, out: b} sharing one weight
// tensor, <conv2d(x, spec), y> == <x, conv2d_transposed(y, spec_t)>.
Tensor conv2d_transposed(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor& bias);

enum class MaskKind { A, B };
enum class MaskStack { single, vertical, horizontal };

struct MaskSpec {
    MaskKind kind = MaskKind::A;
    std::size_t kernel_h = 5;
    std::size_t kernel_w = 5;
    MaskStack stack = MaskStack::single;
    // Leading input channels that carry conditioning features rather than
    // autoregressive values; their taps are never masked.
    std::size_t unmasked_channels = 0;
};

// 0/1 tap mask [kh, kw] for the autoregressive channels.
//   single:     raster predecessors of the center (A), plus the center (B)
//   vertical:   rows above the center (A), rows up to and including it (B)
//   horizontal: same row, left of the center (A), left-inclusive (B)
Tensor build_mask(const MaskSpec& spec);

// conv2d with stride 1, "same" padding and the weights restricted to the mask;
// masked taps never contribute and receive zero gradient.
Tensor masked_conv2d(const Tensor& input, const MaskSpec& mask, const ConvSpec& conv,
                     const Tensor& weights, const Tensor& bias);

// tanh(p1 + c1) * sigmoid(p2 + c2) where [p1, p2] split the 2C channels of
// `preact` [N, 2C, H, W] and [c1, c2] split `condition`, which is either
// undefined, [N, 2C, H, W], or [N, 2C] (broadcast over space).
Tensor gated_activation(const Tensor& preact, const Tensor& condition);

enum class ConditionKind { none, spatial, linear };

// Condition path of a gated block: a 1x1 conv of an upsampled feature map
// (spatial) or a dense map of the flat latent (linear).
struct GatedBlockParams {
    ConditionKind kind = ConditionKind::none;
    Tensor weight;  // spatial: [2C, Cc, 1, 1]; linear: [2C, D]
    Tensor bias;    // [2C]
};

// gated_activation(features, contribution of `condition` through params).
Tensor gated_block(const Tensor& features, const Tensor& condition, const GatedBlockParams& params);

// Named parameters in insertion order, initialized deterministically: each
// tensor's values depend only on (seed, name).
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

    // Uniform in +-sqrt(6 / (fan_in + fan_out)).
    const Tensor& add_weight(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out);
    const Tensor& add_zeros(const std::string& name, Shape shape);
    const Tensor& add(const std::string& name, Tensor value);

    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

private:
    std::uint64_t seed_;
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

enum class Activation { relu, gated };

// Blind-spot-free autoregressive stack: a vertical stack over rows above and
// a horizontal stack over the current row, joined by a 1x1 vertical->horizontal
// link, with residual connections on the horizontal stack after layer 0.
struct MaskedStackConfig {
    std::size_t input_channels = 1;  // autoregressive channels (image or latent map)
    std::size_t cond_channels = 0;   // unmasked feature channels concatenated in front
    std::size_t width = 16;
    std::size_t layers = 1;
    std::size_t kernel = 5;
    Activation activation = Activation::relu;
    ConditionKind condition = ConditionKind::none;  // gated only
    std::size_t condition_dim = 0;                  // linear: latent dim; spatial: feature channels
};

class MaskedStack {
public:
    MaskedStack() = default;
    MaskedStack(const MaskedStackConfig& config, ParameterStore& store, const std::string& prefix);

    // x [N, input_channels, H, W]; features [N, cond_channels, H, W] (or undefined
    // when cond_channels == 0); condition per ConditionKind (or undefined).
    // Returns [N, width, H, W]. Zero layers is invalid.
    Tensor forward(const Tensor& x, const Tensor& features, const Tensor& condition) const;

    const MaskedStackConfig& config() const { return config_; }

private:
    struct Layer {
        Tensor v_w, v_b, h_w, h_b, link_w, link_b, out_w, out_b;
        GatedBlockParams v_gate, h_gate;
    };
    MaskedStackConfig config_;
    std::vector<Layer> layers_;
};

// Inputs (i', j') with |d logit(i, j) / d x(i', j')| > 1e-12, probed at a
// random single-channel image of the given size. `network` maps
// [1, 1, H, W] to per-pixel logits [1, 1, H, W].
std::set<std::pair<std::size_t, std::size_t>> receptive_field_probe(
    const std::function<Tensor(const Tensor&)>& network, std::size_t height, std::size_t width,
    std::size_t target_row, std::size_t target_col, std::uint64_t seed);

}  // namespace pvae
