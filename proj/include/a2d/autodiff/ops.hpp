// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Elementwise binary ops accept identical shapes
// or a single-element operand (scalar broadcast); the only other broadcast is
// the channel/column bias add. Convolution inputs are NCHW.

#pragma once

#include <cstddef>
#include <vector>

#include "a2d/autodiff/tensor.hpp"

namespace a2d::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
// max(a, floor) elementwise; gradient passes only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [n,in], w [in,out], optional bias [out]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias = {});
// Adds bias [C] along axis 1 of x (rank >= 2).
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Multiplies x along axis 1 by scale [C].
Tensor scale_channels(const Tensor& x, const Tensor& scale);

// x [N,C,H,W], w [O,C,k,k], optional bias [O]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride, std::size_t padding);
// x [N,C,H,W], w [C,1,k,k], optional bias [C]
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                        std::size_t padding);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
// Training-mode batch normalization over (N,H,W) per channel.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices);

// Output spatial extent of a convolution; throws ShapeError on underflow.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace a2d::ad
