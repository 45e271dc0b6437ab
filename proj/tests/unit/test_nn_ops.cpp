#include <cmath>
#include <set>

#include "doctest.h"
#include "pvae/autograd.hpp"
#include "pvae/errors.hpp"
#include "pvae/nn_ops.hpp"
#include "pvae/ops.hpp"
#include "test_util.hpp"

using namespace pvae;
using pvae::testing::bit_equal;
using pvae::testing::max_abs_diff;
using pvae::testing::random_tensor;

namespace {

using PixelSet = std::set<std::pair<std::size_t, std::size_t>>;

// Direct six-loop cross-correlation.
Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
    std::vector<double> out(n * co * oh * ow, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                                    continue;
                                acc += x[((b * ci + c) * h + iy) * wd + ix] * w[((o * ci + c) * kh + ky) * kw + kx];
                            }
                    out[((b * co + o) * oh + y) * ow + xx] = acc;
                }
    return Tensor::from({n, co, oh, ow}, std::move(out));
}

std::size_t count_ones(const Tensor& m) {
    std::size_t c = 0;
    for (double v : m.data()) c += v == 1.0;
    return c;
}

bool raster_before(std::size_t i2, std::size_t j2, std::size_t i, std::size_t j) {
    return i2 < i || (i2 == i && j2 < j);
}

// Causal pixels within Chebyshev distance `radius` of (i, j).
PixelSet causal_cone(std::size_t h, std::size_t w, std::size_t i, std::size_t j, std::size_t radius) {
    PixelSet s;
    for (std::size_t a = 0; a < h; ++a)
        for (std::size_t b = 0; b < w; ++b) {
            const std::size_t di = a > i ? a - i : i - a, dj = b > j ? b - j : j - b;
            if (raster_before(a, b, i, j) && di <= radius && dj <= radius) s.insert({a, b});
        }
    return s;
}

// Receptive field of a chain of single-stack masked layers by iterated
// dilation of the mask supports: first layer kind A, the rest kind B.
PixelSet dilation_oracle(std::size_t h, std::size_t w, std::size_t i, std::size_t j, std::size_t layers) {
    auto support = [](MaskKind kind) {
        const Tensor m = build_mask({kind, 5, 5, MaskStack::single, 0});
        std::vector<std::pair<int, int>> offs;
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x)
                if (m[y * 5 + x] == 1.0) offs.push_back({y - 2, x - 2});
        return offs;
    };
    PixelSet frontier{{i, j}};
    for (std::size_t l = 0; l < layers; ++l) {
        // Walk backwards from the output: the last layer is applied first.
        const auto offs = support(l + 1 == layers ? MaskKind::A : MaskKind::B);
        PixelSet next;
        for (const auto& [a, b] : frontier)
            for (const auto& [dy, dx] : offs) {
                const long y = static_cast<long>(a) + dy, x = static_cast<long>(b) + dx;
                if (y >= 0 && x >= 0 && y < static_cast<long>(h) && x < static_cast<long>(w))
                    next.insert({static_cast<std::size_t>(y), static_cast<std::size_t>(x)});
            }
        frontier = std::move(next);
    }
    return frontier;
}

Tensor masked_weights(std::size_t co, std::size_t ci, std::uint64_t seed) { return random_tensor({co, ci, 5, 5}, seed, 0.3); }

}  // namespace

TEST_CASE("conv2d worked examples") {
    const Tensor ones = Tensor::ones({1, 1, 3, 3});
    const Tensor y = conv2d(ones, ConvSpec{1, 1, 3, 3, 1, 0}, Tensor::ones({1, 1, 3, 3}), Tensor{});
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 9.0);

    std::vector<double> id(25, 0.0);
    id[12] = 1.0;
    const Tensor x = random_tensor({2, 1, 6, 7}, 3);
    const Tensor same = conv2d(x, ConvSpec{1, 1, 5, 5, 1, 2}, Tensor::from({1, 1, 5, 5}, id), Tensor{});
    CHECK(bit_equal(same, x));
}

TEST_CASE("conv2d matches the six-loop reference") {
    const Tensor x = random_tensor({1, 2, 5, 5}, 10);
    const Tensor w = random_tensor({3, 2, 3, 3}, 11);
    const Tensor got = conv2d(x, ConvSpec{2, 3, 3, 3, 2, 1}, w, Tensor{});
    const Tensor ref = naive_conv(x, w, 2, 1);
    REQUIRE(got.shape() == ref.shape());
    CHECK(max_abs_diff(got, ref) < 1e-12);

    const Tensor x2 = random_tensor({3, 4, 9, 8}, 12);
    const Tensor w2 = random_tensor({5, 4, 3, 3}, 13);
    CHECK(max_abs_diff(conv2d(x2, ConvSpec{4, 5, 3, 3, 1, 1}, w2, Tensor{}), naive_conv(x2, w2, 1, 1)) < 1e-12);
}

TEST_CASE("conv2d shape errors") {
    const Tensor x = random_tensor({1, 2, 5, 5}, 1);
    CHECK_THROWS_AS(conv2d(x, ConvSpec{3, 1, 3, 3, 1, 1}, random_tensor({1, 3, 3, 3}, 2), Tensor{}), ShapeError);
    CHECK_THROWS_AS(conv2d(x, ConvSpec{2, 1, 3, 3, 1, 1}, random_tensor({1, 2, 2, 2}, 2), Tensor{}), ShapeError);
    CHECK_THROWS_AS(conv2d(x, ConvSpec{2, 1, 9, 9, 1, 0}, random_tensor({1, 2, 9, 9}, 2), Tensor{}), ShapeError);
}

TEST_CASE("conv2d gradients match central differences") {
    const Tensor x = random_tensor({2, 2, 5, 5}, 20);
    const Tensor w = random_tensor({3, 2, 3, 3}, 21);
    const Tensor b = random_tensor({3}, 22);
    const ConvSpec spec{2, 3, 3, 3, 2, 1};
    CHECK(finite_difference_check([&](const Tensor& t) { return sum(conv2d(t, spec, w, b)); }, x, 1e-5) < 1e-6);
    CHECK(finite_difference_check([&](const Tensor& t) { return sum(conv2d(x, spec, t, b)); }, w, 1e-5) < 1e-6);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Tensor xs = random_tensor({2, 2, 5, 5}, 30 + s);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(square(conv2d(t, spec, w, b))); }, xs,
                                      1e-5) < 1e-4);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(square(conv2d(xs, spec, t, b))); }, w,
                                      1e-5) < 1e-4);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(square(conv2d(xs, spec, w, t))); }, b,
                                      1e-5) < 1e-4);
    }
}

TEST_CASE("conv2d_transposed size, adjointness and bias") {
    const Tensor y = random_tensor({1, 3, 4, 4}, 40);
    const Tensor w = random_tensor({3, 2, 4, 4}, 41);
    const ConvSpec up{3, 2, 4, 4, 2, 1};
    const Tensor out = conv2d_transposed(y, up, w, Tensor{});
    CHECK(out.shape() == Shape{1, 2, 8, 8});

    for (std::uint64_t s = 0; s < 5; ++s) {
        const Tensor a = random_tensor({2, 2, 8, 8}, 50 + s);
        const Tensor b = random_tensor({2, 3, 4, 4}, 60 + s);
        const ConvSpec down{2, 3, 4, 4, 2, 1};
        const double lhs = inner(conv2d(a, down, w, Tensor{}), b);
        const double rhs = inner(a, conv2d_transposed(b, up, w, Tensor{}));
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }
    {
        // odd kernel, stride 2, pad 1 (7 -> 13 -> 7 round trip of sizes)
        const Tensor a = random_tensor({1, 2, 13, 13}, 70);
        const Tensor b = random_tensor({1, 3, 7, 7}, 71);
        const Tensor w3 = random_tensor({3, 2, 3, 3}, 72);
        const double lhs = inner(conv2d(a, ConvSpec{2, 3, 3, 3, 2, 1}, w3, Tensor{}), b);
        const double rhs = inner(a, conv2d_transposed(b, ConvSpec{3, 2, 3, 3, 2, 1}, w3, Tensor{}));
        CHECK(std::abs(lhs - rhs) < 1e-10);
    }

    const Tensor bias = Tensor::from({2}, {0.25, -1.5});
    const Tensor zero_out = conv2d_transposed(Tensor::zeros({1, 3, 4, 4}), up, w, bias);
    for (std::size_t i = 0; i < 64; ++i) CHECK(zero_out[i] == 0.25);
    for (std::size_t i = 64; i < 128; ++i) CHECK(zero_out[i] == -1.5);

    CHECK_THROWS_AS(conv2d_transposed(y, up, random_tensor({2, 3, 4, 4}, 1), Tensor{}), ShapeError);
}

TEST_CASE("conv2d_transposed gradients") {
    const ConvSpec up{3, 2, 4, 4, 2, 1};
    const Tensor w = random_tensor({3, 2, 4, 4}, 80);
    const Tensor b = random_tensor({2}, 81);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Tensor y = random_tensor({2, 3, 3, 3}, 90 + s);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(square(conv2d_transposed(t, up, w, b))); }, y,
                                      1e-5) < 1e-4);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(square(conv2d_transposed(y, up, t, b))); }, w,
                                      1e-5) < 1e-4);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(square(conv2d_transposed(y, up, w, t))); }, b,
                                      1e-5) < 1e-4);
    }
}

TEST_CASE("build_mask tap counts") {
    CHECK(count_ones(build_mask({MaskKind::A, 5, 5, MaskStack::single, 0})) == 12);
    CHECK(count_ones(build_mask({MaskKind::B, 5, 5, MaskStack::single, 0})) == 13);
    CHECK(count_ones(build_mask({MaskKind::A, 5, 5, MaskStack::vertical, 0})) == 10);
    CHECK(count_ones(build_mask({MaskKind::B, 5, 5, MaskStack::vertical, 0})) == 15);
    CHECK(count_ones(build_mask({MaskKind::A, 1, 5, MaskStack::horizontal, 0})) == 2);
    CHECK(count_ones(build_mask({MaskKind::B, 1, 5, MaskStack::horizontal, 0})) == 3);
    CHECK(count_ones(build_mask({MaskKind::A, 5, 5, MaskStack::horizontal, 0})) == 2);

    const Tensor a = build_mask({MaskKind::A, 5, 5, MaskStack::single, 0});
    CHECK(a[12] == 0.0);  // center
    CHECK(a[11] == 1.0);  // left of center
    CHECK(a[13] == 0.0);  // right of center
    const Tensor v = build_mask({MaskKind::A, 5, 5, MaskStack::vertical, 0});
    for (std::size_t x = 0; x < 5; ++x) {
        CHECK(v[1 * 5 + x] == 1.0);
        CHECK(v[2 * 5 + x] == 0.0);
    }
    CHECK_THROWS_AS(build_mask({MaskKind::A, 4, 5, MaskStack::single, 0}), ShapeError);
    CHECK_THROWS_AS(build_mask({MaskKind::A, 5, 4, MaskStack::single, 0}), ShapeError);
}

TEST_CASE("masked_conv2d causality") {
    const MaskSpec mask_a{MaskKind::A, 5, 5, MaskStack::single, 0};
    const MaskSpec mask_b{MaskKind::B, 5, 5, MaskStack::single, 0};
    const ConvSpec conv{1, 1, 5, 5, 1, 2};
    const Tensor w = masked_weights(1, 1, 100);
    const Tensor bias = Tensor::from({1}, {0.75});

    SUBCASE("first pixel sees only the bias") {
        const Tensor y = masked_conv2d(random_tensor({1, 1, 6, 6}, 101), mask_a, conv, w, bias);
        CHECK(y[0] == 0.75);
    }
    SUBCASE("kind A has zero self-dependence; A then B stays strictly causal") {
        const std::size_t h = 6, wd = 6;
        const Tensor w2 = masked_weights(1, 1, 102);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < wd; ++j) {
                for (int depth = 1; depth <= 2; ++depth) {
                    auto net = [&](const Tensor& x) {
                        Tensor y = masked_conv2d(x, mask_a, conv, w, bias);
                        if (depth == 2) y = masked_conv2d(tanh(y), mask_b, conv, w2, bias);
                        return y;
                    };
                    const PixelSet rf = receptive_field_probe(net, h, wd, i, j, 7);
                    for (const auto& [a, b] : rf) CHECK(raster_before(a, b, i, j));
                    CHECK(rf.count({i, j}) == 0);
                }
            }
    }
    SUBCASE("contract errors") {
        CHECK_THROWS_AS(masked_conv2d(random_tensor({1, 1, 6, 6}, 1), mask_a, ConvSpec{1, 1, 5, 5, 2, 2}, w, bias),
                        ContractError);
        CHECK_THROWS_AS(masked_conv2d(random_tensor({1, 2, 6, 6}, 1), mask_a, conv, w, bias), ShapeError);
    }
}

TEST_CASE("masked_conv2d mask idempotence and equivalence with pre-masked conv2d") {
    const Tensor x = random_tensor({2, 3, 7, 7}, 110);
    const Tensor w = random_tensor({4, 3, 5, 5}, 111);
    const Tensor b = random_tensor({4}, 112);
    for (MaskStack stack : {MaskStack::single, MaskStack::vertical, MaskStack::horizontal})
        for (MaskKind kind : {MaskKind::A, MaskKind::B}) {
            const MaskSpec ms{kind, 5, 5, stack, 1};
            const Tensor m = build_mask(ms);
            std::vector<double> pre(w.data().begin(), w.data().end());
            for (std::size_t o = 0; o < 4; ++o)
                for (std::size_t c = 1; c < 3; ++c)  // channel 0 is unmasked conditioning
                    for (std::size_t t = 0; t < 25; ++t) pre[(o * 3 + c) * 25 + t] *= m[t];
            const Tensor wm = Tensor::from(w.shape(), pre);
            const ConvSpec conv{3, 4, 5, 5, 1, 2};
            const Tensor y_raw = masked_conv2d(x, ms, conv, w, b);
            const Tensor y_pre = masked_conv2d(x, ms, conv, wm, b);
            CHECK(bit_equal(y_raw, y_pre));
            CHECK(max_abs_diff(y_raw, conv2d(x, conv, wm, b)) < 1e-12);
        }
}

TEST_CASE("masked_conv2d gradients vanish on masked taps and match finite differences") {
    const MaskSpec ms{MaskKind::A, 5, 5, MaskStack::single, 0};
    const ConvSpec conv{2, 3, 5, 5, 1, 2};
    const Tensor x = random_tensor({2, 2, 6, 6}, 120);
    const Tensor w = random_tensor({3, 2, 5, 5}, 121).as_leaf();
    const GradientMap g = backward(sum(square(masked_conv2d(x, ms, conv, w, Tensor{}))));
    const Tensor m = build_mask(ms);
    for (std::size_t i = 0; i < w.numel(); ++i)
        if (m[i % 25] == 0.0) CHECK(g.at(w)[i] == 0.0);

    const Tensor b = random_tensor({3}, 122);
    const MaskSpec row{MaskKind::B, 1, 5, MaskStack::horizontal, 1};
    const ConvSpec row_conv{2, 3, 1, 5, 1, 2};
    const Tensor wr = random_tensor({3, 2, 1, 5}, 123);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Tensor xs = random_tensor({2, 2, 6, 6}, 130 + s);
        CHECK(finite_difference_check(
                  [&](const Tensor& t) { return sum(square(masked_conv2d(t, ms, conv, w.detach(), b))); }, xs, 1e-5) <
              1e-4);
        CHECK(finite_difference_check(
                  [&](const Tensor& t) { return sum(square(masked_conv2d(xs, ms, conv, t, b))); }, w.detach(), 1e-5) <
              1e-4);
        CHECK(finite_difference_check(
                  [&](const Tensor& t) { return sum(square(masked_conv2d(t, row, row_conv, wr, b))); }, xs, 1e-5) <
              1e-4);
        CHECK(finite_difference_check(
                  [&](const Tensor& t) { return sum(square(masked_conv2d(xs, row, row_conv, t, b))); }, wr, 1e-5) <
              1e-4);
    }
}

TEST_CASE("gated activation") {
    const Tensor z = gated_activation(Tensor::zeros({1, 4, 3, 3}), Tensor::zeros({1, 4}));
    for (double v : z.data()) CHECK(v == 0.0);
    const Tensor big = gated_activation(Tensor::full({1, 2, 2, 2}, 40.0), Tensor{});
    for (double v : big.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(gated_activation(Tensor::zeros({1, 3, 2, 2}), Tensor{}), ShapeError);
    CHECK_THROWS_AS(gated_activation(Tensor::zeros({1, 4, 2, 2}), Tensor::zeros({1, 6})), ShapeError);

    const Tensor cond_flat = random_tensor({2, 6}, 140);
    const Tensor cond_map = random_tensor({2, 6, 3, 3}, 141);
    const Tensor mix = random_tensor({2, 3, 3, 3}, 142);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Tensor p = random_tensor({2, 6, 3, 3}, 150 + s);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(gated_activation(t, cond_flat), mix)); },
                                      p, 1e-5) < 1e-4);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(gated_activation(p, t), mix)); },
                                      cond_flat, 1e-5) < 1e-4);
        CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(gated_activation(p, t), mix)); },
                                      cond_map, 1e-5) < 1e-4);
    }
}

TEST_CASE("gated_block condition paths") {
    ParameterStore store(3);
    GatedBlockParams spatial{ConditionKind::spatial, store.add_weight("s_w", {6, 4, 1, 1}, 4, 6),
                             store.add_zeros("s_b", {6})};
    GatedBlockParams dense{ConditionKind::linear, store.add_weight("d_w", {6, 5}, 5, 6), store.add_zeros("d_b", {6})};
    const Tensor feats = random_tensor({2, 6, 3, 3}, 160);
    const Tensor fmap = random_tensor({2, 4, 3, 3}, 161);
    const Tensor latent = random_tensor({2, 5}, 162);
    const Tensor mix = random_tensor({2, 3, 3, 3}, 163);

    // With zero condition weights the block reduces to the plain gate.
    GatedBlockParams zeroed{ConditionKind::linear, Tensor::zeros({6, 5}), Tensor::zeros({6})};
    CHECK(bit_equal(gated_block(feats, latent, zeroed), gated_activation(feats, Tensor{})));

    CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(gated_block(feats, t, spatial), mix)); }, fmap,
                                  1e-5) < 1e-4);
    CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(gated_block(feats, t, dense), mix)); }, latent,
                                  1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](const Tensor& t) {
                  GatedBlockParams p = dense;
                  p.weight = t;
                  return sum(mul(gated_block(feats, latent, p), mix));
              },
              dense.weight.detach(), 1e-5) < 1e-4);
    CHECK_THROWS_AS(gated_block(random_tensor({2, 4, 3, 3}, 1), latent, dense), ShapeError);
}

TEST_CASE("receptive field of one single-stack kind-A layer is the causal distance-2 cone") {
    const MaskSpec ms{MaskKind::A, 5, 5, MaskStack::single, 0};
    const Tensor w = masked_weights(1, 1, 170);
    auto net = [&](const Tensor& x) { return masked_conv2d(x, ms, ConvSpec{1, 1, 5, 5, 1, 2}, w, Tensor{}); };
    const PixelSet rf = receptive_field_probe(net, 8, 8, 3, 3, 1);
    CHECK(rf == causal_cone(8, 8, 3, 3, 2));
    CHECK(rf.size() == 12);
}

TEST_CASE("receptive field with zero layers is empty") {
    // Factorized output: logits are a learned constant per pixel.
    const Tensor bias_map = random_tensor({1, 1, 8, 8}, 3).as_leaf();
    auto net = [&](const Tensor&) { return bias_map; };
    CHECK(receptive_field_probe(net, 8, 8, 4, 4, 1).empty());
}

TEST_CASE("single-stack chains match the dilation oracle and have a blind spot") {
    const std::size_t h = 12, w = 12;
    for (std::size_t k = 1; k <= 3; ++k) {
        std::vector<Tensor> ws;
        for (std::size_t l = 0; l < k; ++l) ws.push_back(masked_weights(1, 1, 180 + l));
        auto net = [&](const Tensor& x) {
            Tensor y = x;
            for (std::size_t l = 0; l < k; ++l) {
                const MaskSpec ms{l == 0 ? MaskKind::A : MaskKind::B, 5, 5, MaskStack::single, 0};
                y = masked_conv2d(l == 0 ? y : tanh(y), ms, ConvSpec{1, 1, 5, 5, 1, 2}, ws[l], Tensor{});
            }
            return y;
        };
        const std::size_t ti = 9, tj = 6;
        const PixelSet rf = receptive_field_probe(net, h, w, ti, tj, 2);
        CHECK(rf == dilation_oracle(h, w, ti, tj, k));
        const PixelSet cone = causal_cone(h, w, ti, tj, 2 * k);
        for (const auto& p : rf) CHECK(cone.count(p) == 1);
        if (k >= 2) CHECK(rf.size() < cone.size());  // upper-right pixels are unreachable
    }
}

TEST_CASE("vertical/horizontal stacks fill the causal 2k cone with no blind spot") {
    const std::size_t h = 14, w = 14;
    for (std::size_t k = 1; k <= 3; ++k) {
        ParameterStore store(9);
        MaskedStackConfig cfg;
        cfg.input_channels = 1;
        cfg.width = 4;
        cfg.layers = k;
        cfg.activation = Activation::gated;
        const MaskedStack stack(cfg, store, "s.");
        const Tensor head = store.add_weight("head", {1, 4, 1, 1}, 4, 1);
        auto net = [&](const Tensor& x) {
            return conv2d(stack.forward(x, Tensor{}, Tensor{}), ConvSpec{4, 1, 1, 1, 1, 0}, head, Tensor{});
        };
        for (const auto& [ti, tj] : std::vector<std::pair<std::size_t, std::size_t>>{{7, 7}, {0, 5}, {13, 0}, {6, 13}}) {
            CAPTURE(k);
            CAPTURE(ti);
            CAPTURE(tj);
            const PixelSet rf = receptive_field_probe(net, h, w, ti, tj, 4);
            CHECK(rf == causal_cone(h, w, ti, tj, 2 * k));
        }
    }
}

TEST_CASE("masked stack with unmasked conditioning features stays causal in the image") {
    ParameterStore store(10);
    MaskedStackConfig cfg;
    cfg.input_channels = 1;
    cfg.cond_channels = 2;
    cfg.width = 4;
    cfg.layers = 2;
    cfg.activation = Activation::relu;
    const MaskedStack stack(cfg, store, "s.");
    const Tensor feats = random_tensor({1, 2, 8, 8}, 190).as_leaf();
    const Tensor head = store.add_weight("head", {1, 4, 1, 1}, 4, 1);
    auto net = [&](const Tensor& x) {
        return conv2d(stack.forward(x, feats, Tensor{}), ConvSpec{4, 1, 1, 1, 1, 0}, head, Tensor{});
    };
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            for (const auto& [a, b] : receptive_field_probe(net, 8, 8, i, j, 5)) CHECK(raster_before(a, b, i, j));
}

TEST_CASE("parameter store initialization is deterministic and name-keyed") {
    ParameterStore a(42), b(42), c(43);
    const Tensor& wa = a.add_weight("conv.w", {4, 3, 3, 3}, 27, 36);
    b.add_zeros("other", {2});
    const Tensor& wb = b.add_weight("conv.w", {4, 3, 3, 3}, 27, 36);
    const Tensor& wc = c.add_weight("conv.w", {4, 3, 3, 3}, 27, 36);
    CHECK(bit_equal(wa, wb));
    CHECK_FALSE(bit_equal(wa, wc));
    const double limit = std::sqrt(6.0 / 63.0);
    for (double v : wa.data()) CHECK(std::abs(v) <= limit);
    for (double v : b.get("other").data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(a.add_zeros("conv.w", {1}), ConfigError);
}
