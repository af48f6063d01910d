// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fhdr/graph.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr {

struct ModelConfig {
  int base_channels = 64;
  int growth_rate = 32;
  int num_ddb = 3;
  int dilated_layers_per_ddb = 4;
  int iterations = 4;
  int dilation = 2;

  /// Throws ContractError on an invalid configuration.
  void validate() const;
  [[nodiscard]] std::string str() const;
  bool operator==(const ModelConfig&) const = default;
};

/// One convolution layer: weight [Cout, Cin, k, k], bias [1, Cout, 1, 1].
template <typename T>
struct ConvLayer {
  std::string name;
  Tensor<T> weight;
  Tensor<T> bias;
  int dilation = 1;
};

template <typename T>
struct DdbParams {
  ConvLayer<T> fuse;                // 1x1: input + local hidden -> base
  std::vector<ConvLayer<T>> dense;  // dilated 3x3, each emitting growth_rate channels
  ConvLayer<T> compress;            // 1x1: base + L*growth -> base
};

/// Trainable weights of all three blocks. Shared by every feedback iteration.
template <typename T>
struct FhdrParams {
  ModelConfig config;
  ConvLayer<T> feb1, feb2;
  ConvLayer<T> fbb_fuse;
  std::vector<DdbParams<T>> ddbs;
  ConvLayer<T> fbb_tail;
  ConvLayer<T> hrb1, hrb2;

  /// He-uniform weights (bound sqrt(6/fan_in)) and zero biases from a seeded stream.
  static FhdrParams init(const ModelConfig& config, std::uint64_t seed);

  /// Every layer in a fixed order (FEB, FBB, HRB).
  [[nodiscard]] std::vector<const ConvLayer<T>*> layers() const;
  /// Weight and bias tensors as "<layer>.weight" / "<layer>.bias", in layers() order.
  [[nodiscard]] std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  [[nodiscard]] std::size_t scalar_count() const;
};

/// Hidden state carried between feedback iterations. Undefined tensors mean
/// "first iteration": the hidden state is taken from the block's own input.
template <typename T>
struct FeedbackState {
  Tensor<T> global_hidden;
  std::vector<Tensor<T>> local_hidden;

  /// t = 1 state: global hidden equals f_in, local hidden left to each DDB input.
  static FeedbackState initial(const Tensor<T>& f_in, int num_ddb);
};

template <typename T>
struct FebOutput {
  Tensor<T> f_in;   // after the second conv
  Tensor<T> f_in1;  // after the first conv, used by the global residual
};

template <typename T>
struct DdbOutput {
  Tensor<T> out;
  Tensor<T> new_local_hidden;
};

template <typename T>
struct FbbOutput {
  Tensor<T> f_fbb;
  FeedbackState<T> state;
};

template <typename T>
FebOutput<T> feb_forward(Graph<T>& g, const Tensor<T>& ldr, const FhdrParams<T>& params);

template <typename T>
DdbOutput<T> ddb_forward(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& local_hidden,
                         const DdbParams<T>& ddb, int base_channels);

template <typename T>
FbbOutput<T> fbb_forward(Graph<T>& g, const Tensor<T>& f_in, const FeedbackState<T>& state,
                         const FhdrParams<T>& params);

template <typename T>
Tensor<T> hrb_forward(Graph<T>& g, const Tensor<T>& f_res, const FhdrParams<T>& params);

/// Unrolls the network for `iterations` steps and returns one HDR image per step.
template <typename T>
std::vector<Tensor<T>> fhdr_forward(Graph<T>& g, const Tensor<T>& ldr,
                                    const FhdrParams<T>& params, int iterations);

/// Scalar trainable parameter count implied by a configuration.
std::size_t param_count(const ModelConfig& config);

struct LayerAudit {
  std::size_t feb = 0;
  std::size_t fbb = 0;
  std::size_t hrb = 0;
  std::size_t per_ddb = 0;
  int ddb_concat_channels = 0;  // width entering each DDB's output compression
};

/// Counts conv2d ops recorded during one iteration of a real forward pass.
LayerAudit audit_layers(const ModelConfig& config);

extern template struct FhdrParams<float>;
extern template struct FhdrParams<double>;
extern template struct FeedbackState<float>;
extern template struct FeedbackState<double>;

}  // namespace fhdr
