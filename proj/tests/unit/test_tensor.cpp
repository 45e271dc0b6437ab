#include <cmath>

#include "doctest.h"
#include "pvae/autograd.hpp"
#include "pvae/errors.hpp"
#include "pvae/nn_ops.hpp"
#include "pvae/ops.hpp"
#include "test_util.hpp"

using namespace pvae;
using pvae::testing::random_tensor;

TEST_CASE("tensor_full fills and validates its shape") {
    const Tensor z = Tensor::full({2, 2}, 0.0);
    CHECK(z.shape() == Shape{2, 2});
    for (double v : z.data()) CHECK(v == 0.0);
    CHECK(Tensor::full({1}, 3.5).item() == 3.5);
    CHECK(sum(Tensor::full({2, 3}, 1.0)).item() == 6.0);
    CHECK_FALSE(z.tracked());
    CHECK_THROWS_AS(Tensor::full({}, 1.0), ShapeError);
    CHECK_THROWS_AS(Tensor::full({2, 0}, 1.0), ShapeError);
    CHECK_THROWS_AS(Tensor::from({2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("reshape shares values and keeps the original shape") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor b = a.reshape({3, 2});
    CHECK(a.shape() == Shape{2, 3});
    CHECK(b.shape() == Shape{3, 2});
    a.mutable_data()[0] = 9.0;
    CHECK(b[0] == 9.0);
    CHECK_THROWS_AS(a.reshape({4}), ShapeError);
}

TEST_CASE("backward on simple losses") {
    SUBCASE("sum of squares") {
        const Tensor x = Tensor::parameter({3}, {1, 2, 3});
        const GradientMap g = backward(sum(mul(x, x)));
        const Tensor& gx = g.at(x);
        CHECK(gx[0] == 2.0);
        CHECK(gx[1] == 4.0);
        CHECK(gx[2] == 6.0);
        CHECK(gx.shape() == x.shape());
    }
    SUBCASE("sum gives ones") {
        const Tensor x = random_tensor({2, 3, 4}, 3).as_leaf();
        const GradientMap g = backward(sum(x));
        for (double v : g.at(x).data()) CHECK(v == 1.0);
        CHECK(g.at(x).shape() == Shape{2, 3, 4});
    }
    SUBCASE("every reachable leaf appears once, even with zero gradient") {
        const Tensor a = Tensor::parameter({2}, {1, 2});
        const Tensor b = Tensor::parameter({2}, {3, 4});
        const Tensor loss = sum(add(mul(a, 0.0), b));
        const GradientMap g = backward(loss);
        CHECK(g.size() == 2);
        CHECK(g.at(a)[0] == 0.0);
        CHECK(g.at(b)[1] == 1.0);
    }
    SUBCASE("untracked tensors carry no gradient") {
        const Tensor a = Tensor::from({2}, {1, 2});
        const Tensor b = Tensor::parameter({2}, {3, 4});
        const GradientMap g = backward(sum(mul(a, b)));
        CHECK_FALSE(g.contains(a));
        CHECK(g.at(b)[1] == 2.0);
    }
}

TEST_CASE("backward contract errors") {
    const Tensor x = Tensor::parameter({2}, {1, 2});
    CHECK_THROWS_AS(backward(mul(x, 2.0)), ContractError);
    CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), ContractError);
}

TEST_CASE("the same graph can be swept twice") {
    const Tensor x = Tensor::parameter({2}, {1, 2});
    const Tensor loss = sum(square(x));
    const GradientMap g1 = backward(loss);
    const GradientMap g2 = backward(loss);
    CHECK(g1.at(x)[1] == g2.at(x)[1]);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    const Tensor x = Tensor::parameter({2}, {1, 2});
    {
        NoGradGuard guard;
        CHECK_FALSE(sum(x).tracked());
    }
    CHECK(sum(x).tracked());
}

TEST_CASE("finite_difference_check") {
    SUBCASE("linear function is exact on dyadic points") {
        const Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5});
        CHECK(finite_difference_check([](const Tensor& x) { return sum(x); }, p, 0x1.0p-16) == 0.0);
        CHECK(finite_difference_check([](const Tensor& x) { return sum(x); }, random_tensor({5}, 1), 1e-5) < 1e-9);
    }
    SUBCASE("quadratic") {
        const Tensor p = Tensor::from({2}, {1.0, -1.0});
        const double err =
            finite_difference_check([](const Tensor& x) { return mul(sum(square(x)), 0.5); }, p, 1e-5);
        CHECK(err < 1e-8);
    }
    SUBCASE("non-finite output is a numeric error") {
        const Tensor p = Tensor::from({1}, {1000.0});
        CHECK_THROWS_AS(finite_difference_check([](const Tensor& x) { return sum(exp(x)); }, p, 1e-5),
                        NumericError);
    }
}

TEST_CASE("elementwise and structural ops pass finite differences at 10 random points") {
    using Fn = std::function<Tensor(const Tensor&)>;
    const Tensor other = random_tensor({2, 3, 2, 2}, 99);
    const Tensor bias = random_tensor({3}, 98);
    const Tensor w = random_tensor({5, 12}, 97);
    const std::vector<std::pair<const char*, Fn>> fns = {
        {"add", [&](const Tensor& x) { return sum(mul(add(x, other), other)); }},
        {"sub", [&](const Tensor& x) { return sum(mul(sub(other, x), other)); }},
        {"mul", [&](const Tensor& x) { return sum(mul(x, x)); }},
        {"exp", [](const Tensor& x) { return sum(exp(x)); }},
        {"tanh", [&](const Tensor& x) { return sum(mul(tanh(x), other)); }},
        {"sigmoid", [&](const Tensor& x) { return sum(mul(sigmoid(x), other)); }},
        {"softplus", [&](const Tensor& x) { return sum(mul(softplus(x), other)); }},
        {"relu", [&](const Tensor& x) { return sum(mul(relu(x), other)); }},
        {"mean", [](const Tensor& x) { return mean(square(x)); }},
        {"sum_per_batch", [](const Tensor& x) { return sum(square(sum_per_batch(x))); }},
        {"bias", [&](const Tensor& x) { return sum(square(add_channel_bias(x, bias))); }},
        {"linear", [&](const Tensor& x) { return sum(square(linear(x.reshape({2, 12}), w, Tensor{}))); }},
        {"slice+concat",
         [&](const Tensor& x) {
             return sum(mul(concat_channels({slice_channels(x, 2, 1), slice_channels(x, 0, 2)}), other));
         }},
        {"expand_spatial",
         [&](const Tensor& x) { return sum(mul(expand_spatial(x.reshape({2, 12}), 1, 1), other.reshape({2, 12, 1, 1}))); }},
        {"batch_bias", [&](const Tensor& x) { return sum(square(add_batch_bias(other, slice_rows(x, 1, 1).reshape({1, 3, 2, 2})))); }},
        {"batch_bias_x", [&](const Tensor& x) { return sum(square(add_batch_bias(x, slice_rows(other, 0, 1).reshape({1, 3, 2, 2})))); }},
    };
    for (const auto& [name, f] : fns) {
        CAPTURE(name);
        double worst = 0.0;
        for (std::uint64_t s = 0; s < 10; ++s)
            worst = std::max(worst, finite_difference_check(f, random_tensor({2, 3, 2, 2}, 1000 + s), 1e-5));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("linear parameters pass finite differences") {
    const Tensor x = random_tensor({3, 4}, 5);
    const Tensor w = random_tensor({2, 4}, 6);
    const Tensor b = random_tensor({2}, 7);
    CHECK(finite_difference_check([&](const Tensor& wt) { return sum(square(linear(x, wt, b))); }, w, 1e-5) < 1e-4);
    CHECK(finite_difference_check([&](const Tensor& bt) { return sum(square(linear(x, w, bt))); }, b, 1e-5) < 1e-4);
}

TEST_CASE("gradient of a sum of losses is the sum of the gradients") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Tensor x = random_tensor({2, 2, 3, 3}, 200 + s).as_leaf();
        const Tensor w = random_tensor({3, 2, 3, 3}, 300 + s).as_leaf();
        const ConvSpec spec{2, 3, 3, 3, 1, 1};
        auto loss1 = [&] { return sum(square(conv2d(x, spec, w, Tensor{}))); };
        auto loss2 = [&] { return sum(tanh(x)); };
        const GradientMap g1 = backward(loss1());
        const GradientMap g2 = backward(loss2());
        const GradientMap g12 = backward(add(loss1(), loss2()));
        for (std::size_t i = 0; i < x.numel(); ++i)
            CHECK(g12.at(x)[i] == doctest::Approx(g1.at(x)[i] + g2.at(x)[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < w.numel(); ++i) CHECK(g12.at(w)[i] == doctest::Approx(g1.at(w)[i]).epsilon(1e-12));
    }
}

TEST_CASE("repeated forward evaluation is bit-identical") {
    const Tensor x = random_tensor({2, 3, 6, 6}, 4);
    const Tensor w = random_tensor({4, 3, 3, 3}, 5);
    const ConvSpec spec{3, 4, 3, 3, 2, 1};
    const Tensor a = tanh(conv2d(x, spec, w, Tensor{}));
    const Tensor b = tanh(conv2d(x, spec, w, Tensor{}));
    CHECK(pvae::testing::bit_equal(a, b));
}

TEST_CASE("mutating an interior tensor is rejected") {
    const Tensor x = Tensor::parameter({2}, {1, 2});
    Tensor y = mul(x, 2.0);
    CHECK_THROWS_AS(y.mutable_data(), ContractError);
}
