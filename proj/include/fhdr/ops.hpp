// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives. Every op takes the graph it records into; with
// a non-recording graph the ops are plain forward computations.

#pragma once

#include <span>

#include "fhdr/graph.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr::ops {

/// Stride-1 "same" convolution. weight is [Cout, Cin, k, k] with k in {1, 3};
/// zero padding is (k-1)*dilation/2 on each side.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int dilation = 1);

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

/// Concatenation of any number of tensors along C, in order.
template <typename T>
Tensor<T> concat_channels(Graph<T>& g, std::span<const Tensor<T>> parts);

/// Channels [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(Graph<T>& g, const Tensor<T>& x, int begin, int count);

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor);

/// log(1 + mu*x) / log(1 + mu); x must be nonnegative.
template <typename T>
Tensor<T> log1p_scaled(Graph<T>& g, const Tensor<T>& x, T mu);

/// mean(|a - b|) as a 1x1x1x1 tensor.
template <typename T>
Tensor<T> l1_mean(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& x);

/// 2x2 average pooling with stride 2; odd trailing rows/cols are dropped.
template <typename T>
Tensor<T> avg_pool2(Graph<T>& g, const Tensor<T>& x);

}  // namespace fhdr::ops
