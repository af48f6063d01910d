// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fhdr/graph.hpp"
#include "fhdr/model.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr {

struct LossConfig {
  double mu = 5000.0;
  double lambda = 0.1;
  bool perceptual_enabled = true;

  void validate() const;
};

/// Fixed conv+ReLU feature network used by the perceptual loss. Stages are
/// separated by 2x2 average pooling. Its weights never require grad, but
/// gradients flow through it to whatever produced the input.
template <typename T>
class PerceptualExtractor {
 public:
  static constexpr std::uint64_t kDefaultSeed = 0x5eedfeedULL;

  /// Seeded He-uniform weights; widths default to 16/32/64.
  explicit PerceptualExtractor(std::vector<int> widths = {16, 32, 64},
                               std::uint64_t seed = kDefaultSeed);

  /// Externally supplied weights, named "stage<i>.weight" / "stage<i>.bias"
  /// with 3x3 kernels and channel counts chained from 3 input channels.
  static PerceptualExtractor from_named(
      const std::vector<std::pair<std::string, Tensor<T>>>& tensors);

  /// Feature map after every stage.
  [[nodiscard]] std::vector<Tensor<T>> features(Graph<T>& g, const Tensor<T>& image) const;

  [[nodiscard]] std::size_t stage_count() const { return stages_.size(); }
  [[nodiscard]] std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;

 private:
  struct Unset {};
  explicit PerceptualExtractor(Unset) {}
  std::vector<ConvLayer<T>> stages_;
};

/// mu-law range compression log(1 + mu*h) / log(1 + mu).
template <typename T>
Tensor<T> tonemap(Graph<T>& g, const Tensor<T>& h, double mu);

/// Tonemapped L1 averaged over the feedback iterations.
template <typename T>
Tensor<T> loss_l1(Graph<T>& g, std::span<const Tensor<T>> outputs, const Tensor<T>& gt,
                  const LossConfig& cfg);

/// Feature-space L1 of the tonemapped images, averaged over extractor stages
/// and then over iterations.
template <typename T>
Tensor<T> loss_perceptual(Graph<T>& g, std::span<const Tensor<T>> outputs, const Tensor<T>& gt,
                          const PerceptualExtractor<T>& ext, const LossConfig& cfg);

/// loss_perceptual + lambda * loss_l1, or lambda * loss_l1 alone when the
/// perceptual term is disabled.
template <typename T>
Tensor<T> loss_total(Graph<T>& g, std::span<const Tensor<T>> outputs, const Tensor<T>& gt,
                     const PerceptualExtractor<T>& ext, const LossConfig& cfg);

extern template class PerceptualExtractor<float>;
extern template class PerceptualExtractor<double>;

}  // namespace fhdr
