// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Matrices are rank-2 row-major; rank-1 tensors act
// as row vectors where a matrix operand is expected.
#pragma once

#include <cstddef>
#include <vector>

#include "bandfuse/tensor.hpp"

namespace bandfuse {

/// Clamp applied inside every log.
inline constexpr Scalar kLogFloor = Scalar(1e-12);
/// Norm below which l2_normalize divides by this constant instead.
inline constexpr Scalar kNormFloor = Scalar(1e-12);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] or [k]x[k,n] -> [n]
Tensor transpose(const Tensor& x);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a[m,n] + b[n] per row, or a[n] + b[n].
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor scale(const Tensor& x, Scalar s);
Tensor add_scalar(const Tensor& x, Scalar s);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// log(max(x, kLogFloor)); zero gradient below the floor.
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
/// x * log(x) with 0 log 0 := 0 and the log clamped at kLogFloor.
Tensor xlogx(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis);   // rank-2 only
Tensor mean_axis(const Tensor& x, std::size_t axis);  // rank-2 only
/// Mean over the time (row) axis: [T,d] -> [d].
Tensor mean_pool_time(const Tensor& x);

// Structure.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor row(const Tensor& x, std::size_t r);
/// Last time step of a [T,d] sequence.
Tensor last_row(const Tensor& x);

// Normalizations.
/// Temperature softmax over a rank-1 tensor.
Tensor softmax_temp(const Tensor& x, Scalar tau);
/// Plain softmax over the whole (flattened) tensor.
Tensor softmax(const Tensor& x);
/// Softmax applied independently to each row of a matrix.
Tensor softmax_rows(const Tensor& x);
Tensor l2_normalize(const Tensor& x);
/// Row-wise layer norm with affine gamma/beta of length n.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = Scalar(1e-5));

/// Same values as x; contributes no gradient to x or anything upstream.
Tensor stop_gradient(const Tensor& x);

// Mixtures.
/// sum_k w[k] * xs[k]; all xs share a shape, w has one entry per term.
Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w);
/// (alpha * mask) / (sum(alpha * mask) + eps); mask entries are 0/1 constants.
Tensor masked_renormalize(const Tensor& alpha, const std::vector<Scalar>& mask, Scalar eps);

// Temporal convolution with zero padding, output length equal to input length.
// x: [T, in], weight: [kernel*in, out] with row index (tap*in + channel), bias: [out].
Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t kernel);

// Losses.
Tensor mse(const Tensor& pred, const Tensor& target);
/// -log softmax(logits)[target] for rank-1 logits.
Tensor cross_entropy_with_logits(const Tensor& logits, std::size_t target);

}  // namespace bandfuse
