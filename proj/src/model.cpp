#include "pvae/model.hpp"

#include "pvae/errors.hpp"
#include "pvae/ops.hpp"

namespace pvae {

namespace {

struct NamedVariant {
    const char* name;
    Variant value;
};
constexpr NamedVariant kVariants[] = {{"vae-only", Variant::vae_only},
                                      {"pixelcnn-only", Variant::pixelcnn_only},
                                      {"pixelvae", Variant::pixelvae},
                                      {"gated-pixelvae", Variant::gated_pixelvae},
                                      {"gated-no-upsampling", Variant::gated_no_upsampling}};

bool gated(Variant v) { return v == Variant::gated_pixelvae || v == Variant::gated_no_upsampling; }

std::size_t stage_channels(const ModelConfig& c, std::size_t stage) { return c.trunk_width << stage; }

Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& b) {
    return conv2d(x, ConvSpec{w.dim(1), w.dim(0), 1, 1, 1, 0}, w, b);
}

DiagGaussianParams split_gaussian(const Tensor& t, std::size_t dims) {
    return DiagGaussianParams(slice_channels(t, 0, dims), slice_channels(t, dims, dims));
}

Tensor flatten(const Tensor& t) { return t.reshape({t.dim(0), t.numel() / t.dim(0)}); }

// Network input encoding of the teacher image.
Tensor pixel_input(const ModelConfig& c, const Tensor& x) {
    return c.output == OutputFamily::softmax256 ? mul(x, 1.0 / 255.0) : x;
}

}  // namespace

std::string variant_name(Variant v) {
    for (const auto& e : kVariants)
        if (e.value == v) return e.name;
    return "unknown";
}

Variant parse_variant(const std::string& name) {
    for (const auto& e : kVariants)
        if (name == e.name) return e.value;
    throw ConfigError("unknown variant '" + name + "'");
}

std::string output_name(OutputFamily f) { return f == OutputFamily::softmax256 ? "softmax256" : "bernoulli"; }

OutputFamily parse_output(const std::string& name) {
    if (name == "bernoulli") return OutputFamily::bernoulli;
    if (name == "softmax256") return OutputFamily::softmax256;
    throw ConfigError("unknown output family '" + name + "'");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
    if (channels == 0 || height == 0 || width == 0) fail("image dimensions must be positive");
    if (levels != 1 && levels != 2) fail("levels must be 1 or 2");
    if (stages > 4) fail("at most 4 stages");
    if ((height % (std::size_t{1} << stages)) != 0 || (width % (std::size_t{1} << stages)) != 0)
        fail("image size must be divisible by 2^stages");
    if (trunk_width == 0 || latent1 == 0 || hidden == 0 || feature_channels == 0) fail("widths must be positive");
    if (levels == 2 && latent2 == 0) fail("latent2 must be positive");
    if (levels == 2 && prior_layers == 0) fail("two-level models need at least one prior layer");
    if (kernel % 2 == 0) fail("masked kernel must be odd");
    if (variant == Variant::vae_only && pixelcnn_layers != 0)
        fail("vae-only has no autoregressive layers (got " + std::to_string(pixelcnn_layers) + ")");
    if (gated(variant) && pixelcnn_layers == 0) fail(variant_name(variant) + " needs at least one gated layer");
    if (pixelcnn_layers > 32) fail("at most 32 masked layers");
}

std::size_t ModelConfig::latent_levels() const { return variant == Variant::pixelcnn_only ? 0 : levels; }

bool ModelConfig::upsampling() const {
    return variant == Variant::vae_only || variant == Variant::pixelvae || variant == Variant::gated_pixelvae;
}

std::size_t ModelConfig::trunk_channels() const { return stage_channels(*this, stages == 0 ? 0 : stages - 1); }

Shape ModelConfig::latent_shape(std::size_t level, std::size_t n) const {
    if (level == 0 || level > latent_levels()) throw ContractError("no latent level " + std::to_string(level));
    if (levels == 1) return {n, latent1};
    if (level == 1) return {n, latent1, trunk_height(), trunk_width_px()};
    return {n, latent2};
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed), store_(seed) {
    config_.validate();
    const ModelConfig& c = config_;
    const std::size_t ct = c.trunk_channels();
    const std::size_t flat = ct * c.trunk_height() * c.trunk_width_px();
    const std::size_t L = c.latent_levels();

    if (L > 0) {
        const std::size_t n_convs = c.stages == 0 ? 1 : c.stages;
        for (std::size_t s = 0; s < n_convs; ++s) {
            const std::size_t cin = s == 0 ? c.channels : stage_channels(c, s - 1);
            const std::size_t cout = stage_channels(c, s);
            const std::string p = "enc.conv" + std::to_string(s);
            store_.add_weight(p + ".w", {cout, cin, 3, 3}, cin * 9, cout * 9);
            store_.add_zeros(p + ".b", {cout});
        }
        if (L == 1) {
            store_.add_weight("enc.q1.w", {2 * c.latent1, flat}, flat, 2 * c.latent1);
            store_.add_zeros("enc.q1.b", {2 * c.latent1});
        } else {
            store_.add_weight("enc.q1.w", {2 * c.latent1, ct, 1, 1}, ct, 2 * c.latent1);
            store_.add_zeros("enc.q1.b", {2 * c.latent1});
            store_.add_weight("enc.q2.w", {2 * c.latent2, flat}, flat, 2 * c.latent2);
            store_.add_zeros("enc.q2.b", {2 * c.latent2});
        }
    }

    if (c.upsampling()) {
        if (L == 1) {
            store_.add_weight("dec.fc.w", {flat, c.latent1}, c.latent1, flat);
            store_.add_zeros("dec.fc.b", {flat});
        } else {
            store_.add_weight("dec.fc.w", {ct, c.latent1, 1, 1}, c.latent1, ct);
            store_.add_zeros("dec.fc.b", {ct});
        }
        if (c.stages == 0) {
            store_.add_weight("dec.up0.w", {c.feature_channels, ct, 3, 3}, ct * 9, c.feature_channels * 9);
            store_.add_zeros("dec.up0.b", {c.feature_channels});
        } else {
            // up{i} maps stage (stages - 1 - i) back to the resolution above it.
            for (std::size_t i = 0; i < c.stages; ++i) {
                const std::size_t s = c.stages - 1 - i;
                const std::size_t cin = stage_channels(c, s);
                const std::size_t cout = s == 0 ? c.feature_channels : stage_channels(c, s - 1);
                const std::string p = "dec.up" + std::to_string(i);
                store_.add_weight(p + ".w", {cin, cout, 4, 4}, cin * 4, cout * 4);
                store_.add_zeros(p + ".b", {cout});
            }
        }
    }

    const std::size_t out_ch = c.channels * c.classes();
    if (c.pixelcnn_layers > 0) {
        MaskedStackConfig sc;
        sc.input_channels = c.channels;
        sc.cond_channels = c.upsampling() ? c.feature_channels : 0;
        sc.width = c.hidden;
        sc.layers = c.pixelcnn_layers;
        sc.kernel = c.kernel;
        sc.activation = gated(c.variant) ? Activation::gated : Activation::relu;
        if (c.variant == Variant::gated_no_upsampling) {
            sc.condition = ConditionKind::linear;
            sc.condition_dim = shape_numel(c.latent_shape(1, 1));
        }
        pixel_stack_ = MaskedStack(sc, store_, "dec.pix.");
    }
    const bool has_head = c.pixelcnn_layers > 0 || c.upsampling();
    if (has_head) {
        const std::size_t head_in = c.pixelcnn_layers > 0 ? c.hidden : c.feature_channels;
        store_.add_weight("dec.head.w", {out_ch, head_in, 1, 1}, head_in, out_ch);
        store_.add_zeros("dec.head.b", {out_ch});
    }
    store_.add_zeros("dec.pixel_bias", {1, out_ch, c.height, c.width});

    if (L == 2) {
        store_.add_weight("prior.up.w", {c.hidden, c.latent2, 1, 1}, c.latent2, c.hidden);
        store_.add_zeros("prior.up.b", {c.hidden});
        MaskedStackConfig pc;
        pc.input_channels = c.latent1;
        pc.cond_channels = c.hidden;
        pc.width = c.hidden;
        pc.layers = c.prior_layers;
        pc.kernel = c.kernel;
        pc.activation = Activation::relu;
        prior_stack_ = MaskedStack(pc, store_, "prior.pix.");
        store_.add_weight("prior.head.w", {2 * c.latent1, c.hidden, 1, 1}, c.hidden, 2 * c.latent1);
        store_.add_zeros("prior.head.b", {2 * c.latent1});
    }
}

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

std::vector<DiagGaussianParams> encode(const Model& model, const Tensor& x) {
    const ModelConfig& c = model.config();
    if (x.rank() != 4 || x.dim(1) != c.channels || x.dim(2) != c.height || x.dim(3) != c.width)
        throw ShapeError("encode: input " + shape_str(x.shape()) + ", expected " + shape_str(c.image_shape(x.dim(0))));
    const std::size_t L = c.latent_levels();
    if (L == 0) return {};
    Tensor h = pixel_input(c, x);
    const std::size_t n_convs = c.stages == 0 ? 1 : c.stages;
    const std::size_t stride = c.stages == 0 ? 1 : 2;
    for (std::size_t s = 0; s < n_convs; ++s) {
        const std::string p = "enc.conv" + std::to_string(s);
        const Tensor& w = model.param(p + ".w");
        h = relu(conv2d(h, ConvSpec{w.dim(1), w.dim(0), 3, 3, stride, 1}, w, model.param(p + ".b")));
    }
    std::vector<DiagGaussianParams> out;
    if (L == 1) {
        out.push_back(split_gaussian(linear(flatten(h), model.param("enc.q1.w"), model.param("enc.q1.b")), c.latent1));
    } else {
        out.push_back(split_gaussian(conv1x1(h, model.param("enc.q1.w"), model.param("enc.q1.b")), c.latent1));
        out.push_back(split_gaussian(linear(flatten(h), model.param("enc.q2.w"), model.param("enc.q2.b")), c.latent2));
    }
    return out;
}

DecoderContext decoder_context(const Model& model, const Tensor& z1, std::size_t batch) {
    const ModelConfig& c = model.config();
    DecoderContext ctx;
    ctx.batch = batch;
    if (c.latent_levels() == 0) return ctx;
    const Shape want = c.latent_shape(1, batch);
    if (!z1.defined() || z1.shape() != want)
        throw ShapeError("decoder: z1 " + (z1.defined() ? shape_str(z1.shape()) : std::string("undefined")) +
                         ", expected " + shape_str(want));
    if (c.variant == Variant::gated_no_upsampling) {
        ctx.condition = flatten(z1);
        return ctx;
    }
    const std::size_t ct = c.trunk_channels();
    Tensor h;
    if (c.latent_levels() == 1)
        h = relu(linear(z1, model.param("dec.fc.w"), model.param("dec.fc.b")))
                .reshape({batch, ct, c.trunk_height(), c.trunk_width_px()});
    else
        h = relu(conv1x1(z1, model.param("dec.fc.w"), model.param("dec.fc.b")));
    if (c.stages == 0) {
        const Tensor& w = model.param("dec.up0.w");
        h = conv2d(h, ConvSpec{ct, c.feature_channels, 3, 3, 1, 1}, w, model.param("dec.up0.b"));
    } else {
        for (std::size_t i = 0; i < c.stages; ++i) {
            const std::string p = "dec.up" + std::to_string(i);
            const Tensor& w = model.param(p + ".w");
            h = conv2d_transposed(h, ConvSpec{w.dim(0), w.dim(1), 4, 4, 2, 1}, w, model.param(p + ".b"));
            if (i + 1 < c.stages) h = relu(h);
        }
    }
    ctx.features = h;
    return ctx;
}

Tensor decode_rows(const Model& model, const Tensor& x_rows, const DecoderContext& context, std::size_t row0) {
    const ModelConfig& c = model.config();
    if (x_rows.rank() != 4 || x_rows.dim(0) != context.batch || x_rows.dim(1) != c.channels ||
        x_rows.dim(3) != c.width || row0 + x_rows.dim(2) > c.height)
        throw ShapeError("decode: teacher rows " + shape_str(x_rows.shape()) + " at row " + std::to_string(row0) +
                         " do not fit image " + shape_str(c.image_shape(context.batch)));
    const std::size_t n = context.batch, rows = x_rows.dim(2);
    const std::size_t out_ch = c.channels * c.classes();
    Tensor features;
    if (context.features.defined())
        features = rows == c.height ? context.features : slice_rows(context.features, row0, rows);
    Tensor bias = model.param("dec.pixel_bias");
    if (rows != c.height) bias = slice_rows(bias, row0, rows);

    Tensor h;
    if (const MaskedStack* stack = model.pixel_stack())
        h = stack->forward(pixel_input(c, x_rows), features, context.condition);
    else if (features.defined())
        h = features;
    if (!h.defined()) return add_batch_bias(Tensor::zeros({n, out_ch, rows, c.width}), bias);
    return add_batch_bias(conv1x1(relu(h), model.param("dec.head.w"), model.param("dec.head.b")), bias);
}

Tensor decode_pixel_logits(const Model& model, const Tensor& x_teacher, const Tensor& z1) {
    if (x_teacher.rank() != 4) throw ShapeError("decode: teacher image must be [N, C, H, W]");
    return decode_rows(model, x_teacher, decoder_context(model, z1, x_teacher.dim(0)), 0);
}

DiagGaussianParams latent_prior_params(const Model& model, const Tensor& z_above, const Tensor& z_teacher) {
    const ModelConfig& c = model.config();
    const MaskedStack* stack = model.prior_stack();
    if (!stack) throw ContractError("latent_prior_params needs a two-level model");
    const std::size_t n = z_teacher.rank() > 0 ? z_teacher.dim(0) : 0;
    if (z_teacher.shape() != c.latent_shape(1, n) || z_above.shape() != c.latent_shape(2, n))
        throw ShapeError("latent prior: z_above " + shape_str(z_above.shape()) + ", z_teacher " +
                         shape_str(z_teacher.shape()));
    const Tensor up = conv1x1(expand_spatial(z_above, c.trunk_height(), c.trunk_width_px()),
                              model.param("prior.up.w"), model.param("prior.up.b"));
    const Tensor h = stack->forward(z_teacher, up, Tensor{});
    return split_gaussian(conv1x1(relu(h), model.param("prior.head.w"), model.param("prior.head.b")), c.latent1);
}

DiagGaussianParams top_prior(const Model& model, std::size_t n) {
    const ModelConfig& c = model.config();
    if (c.latent_levels() == 0) throw ContractError("pixelcnn-only models have no latent prior");
    return DiagGaussianParams::standard(c.latent_shape(c.latent_levels(), n));
}

Tensor reconstruction_nll(const Model& model, const Tensor& logits, const Tensor& x) {
    if (model.config().output == OutputFamily::softmax256) return categorical_nll(logits, x);
    return bernoulli_nll(logits, x);
}

}  // namespace pvae
