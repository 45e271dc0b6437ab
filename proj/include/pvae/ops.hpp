#pragma once

#include <vector>

#include "pvae/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops require equal
// shapes; the only broadcasts are scalar-with-tensor and per-channel bias.

namespace pvae {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
// Gradient passes where lo <= a <= hi, zero elsewhere.
Tensor clamp(const Tensor& a, double lo, double hi);

// Sum of all elements, shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [N, ...] -> [N]
Tensor sum_per_batch(const Tensor& a);

// x: [N, C, ...], bias: [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// x: [N, ...], bias: [1, ...] added to every batch element.
Tensor add_batch_bias(const Tensor& x, const Tensor& bias);

// x: [N, in], weight: [out, in], bias: [out] or undefined -> [N, out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// [N, C] -> [N, C, H, W] by copying each value over the spatial grid.
Tensor expand_spatial(const Tensor& t, std::size_t height, std::size_t width);

// Concatenate / slice along axis 1 of [N, C, ...] tensors.
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& t, std::size_t begin, std::size_t count);

// Rows [begin, begin + count) of an [N, C, H, W] tensor.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count);

// Flat inner product of the values (no graph).
double inner(const Tensor& a, const Tensor& b);

}  // namespace pvae
