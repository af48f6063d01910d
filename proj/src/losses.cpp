// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/losses.hpp"

#include <cmath>
#include <map>
#include <random>

#include "fhdr/ops.hpp"

namespace fhdr {

void LossConfig::validate() const {
  if (!(mu > 0.0)) throw ContractError("loss config: mu must be positive");
  if (!(lambda >= 0.0)) throw ContractError("loss config: lambda must be nonnegative");
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(std::vector<int> widths, std::uint64_t seed) {
  if (widths.empty()) throw ContractError("perceptual extractor: needs at least one stage");
  std::mt19937_64 rng(seed);
  int cin = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const int cout = widths[i];
    if (cout <= 0) throw ContractError("perceptual extractor: stage width must be positive");
    ConvLayer<T> layer;
    layer.name = "stage" + std::to_string(i);
    layer.weight = Tensor<T>(Shape{cout, cin, 3, 3});
    layer.bias = Tensor<T>(Shape{1, cout, 1, 1});
    const double bound = std::sqrt(6.0 / (cin * 9.0));
    for (T& v : layer.weight.mutable_data()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = static_cast<T>((2.0 * u - 1.0) * bound);
    }
    stages_.push_back(std::move(layer));
    cin = cout;
  }
}

template <typename T>
PerceptualExtractor<T> PerceptualExtractor<T>::from_named(
    const std::vector<std::pair<std::string, Tensor<T>>>& tensors) {
  std::map<std::string, Tensor<T>> by_name(tensors.begin(), tensors.end());
  PerceptualExtractor ext{Unset{}};
  int cin = 3;
  for (int i = 0;; ++i) {
    const std::string stem = "stage" + std::to_string(i);
    auto w = by_name.find(stem + ".weight");
    if (w == by_name.end()) break;
    auto b = by_name.find(stem + ".bias");
    if (b == by_name.end()) throw ContractError("perceptual extractor: missing " + stem + ".bias");
    const Shape ws = w->second.shape();
    if (ws.c != cin || ws.h != 3 || ws.w != 3 || b->second.numel() != static_cast<std::size_t>(ws.n)) {
      throw ContractError("perceptual extractor: " + stem + " has shape " + ws.str() +
                          ", expected [Cout, " + std::to_string(cin) + ", 3, 3]");
    }
    ConvLayer<T> layer;
    layer.name = stem;
    layer.weight = w->second.clone();
    layer.bias = Tensor<T>(Shape{1, ws.n, 1, 1},
                           std::vector<T>(b->second.data().begin(), b->second.data().end()));
    layer.weight.set_requires_grad(false);
    ext.stages_.push_back(std::move(layer));
    cin = ws.n;
  }
  if (ext.stages_.empty()) throw ContractError("perceptual extractor: no stage0.weight found");
  return ext;
}

template <typename T>
std::vector<Tensor<T>> PerceptualExtractor<T>::features(Graph<T>& g,
                                                        const Tensor<T>& image) const {
  if (image.shape().c != stages_.front().weight.shape().c) {
    throw ContractError("perceptual extractor: expects " +
                        std::to_string(stages_.front().weight.shape().c) +
                        " input channels, got " + image.shape().str());
  }
  typename Graph<T>::Scope scope(g, "perceptual");
  std::vector<Tensor<T>> out;
  Tensor<T> x = image;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (i > 0) x = ops::avg_pool2(g, x);
    x = ops::relu(g, ops::conv2d(g, x, stages_[i].weight, stages_[i].bias, 1));
    out.push_back(x);
  }
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> PerceptualExtractor<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto& s : stages_) {
    out.emplace_back(s.name + ".weight", s.weight);
    out.emplace_back(s.name + ".bias", s.bias);
  }
  return out;
}

template <typename T>
Tensor<T> tonemap(Graph<T>& g, const Tensor<T>& h, double mu) {
  return ops::log1p_scaled(g, h, static_cast<T>(mu));
}

namespace {

template <typename T>
void check_outputs(const char* what, std::span<const Tensor<T>> outputs, const Tensor<T>& gt) {
  if (outputs.empty()) throw ContractError(std::string(what) + ": empty outputs list");
  for (const auto& o : outputs) {
    if (o.shape() != gt.shape()) {
      throw ContractError(std::string(what) + ": output shape " + o.shape().str() +
                          " differs from ground truth " + gt.shape().str());
    }
  }
}

template <typename T>
Tensor<T> average(Graph<T>& g, const std::vector<Tensor<T>>& terms) {
  Tensor<T> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(g, acc, terms[i]);
  return ops::scale(g, acc, T(1) / static_cast<T>(terms.size()));
}

}  // namespace

template <typename T>
Tensor<T> loss_l1(Graph<T>& g, std::span<const Tensor<T>> outputs, const Tensor<T>& gt,
                  const LossConfig& cfg) {
  check_outputs("loss_l1", outputs, gt);
  cfg.validate();
  const Tensor<T> target = tonemap(g, gt, cfg.mu);
  std::vector<Tensor<T>> per_iter;
  for (const auto& o : outputs) per_iter.push_back(ops::l1_mean(g, tonemap(g, o, cfg.mu), target));
  return average(g, per_iter);
}

template <typename T>
Tensor<T> loss_perceptual(Graph<T>& g, std::span<const Tensor<T>> outputs, const Tensor<T>& gt,
                          const PerceptualExtractor<T>& ext, const LossConfig& cfg) {
  check_outputs("loss_perceptual", outputs, gt);
  cfg.validate();
  const auto target = ext.features(g, tonemap(g, gt, cfg.mu));
  std::vector<Tensor<T>> per_iter;
  for (const auto& o : outputs) {
    const auto feats = ext.features(g, tonemap(g, o, cfg.mu));
    std::vector<Tensor<T>> per_stage;
    for (std::size_t s = 0; s < feats.size(); ++s) {
      per_stage.push_back(ops::l1_mean(g, feats[s], target[s]));
    }
    per_iter.push_back(average(g, per_stage));
  }
  return average(g, per_iter);
}

template <typename T>
Tensor<T> loss_total(Graph<T>& g, std::span<const Tensor<T>> outputs, const Tensor<T>& gt,
                     const PerceptualExtractor<T>& ext, const LossConfig& cfg) {
  const Tensor<T> l1 = ops::scale(g, loss_l1(g, outputs, gt, cfg), static_cast<T>(cfg.lambda));
  if (!cfg.perceptual_enabled) return l1;
  return ops::add(g, loss_perceptual(g, outputs, gt, ext, cfg), l1);
}

template class PerceptualExtractor<float>;
template class PerceptualExtractor<double>;

#define FHDR_INSTANTIATE_LOSSES(T)                                                           \
  template Tensor<T> tonemap(Graph<T>&, const Tensor<T>&, double);                           \
  template Tensor<T> loss_l1(Graph<T>&, std::span<const Tensor<T>>, const Tensor<T>&,        \
                             const LossConfig&);                                             \
  template Tensor<T> loss_perceptual(Graph<T>&, std::span<const Tensor<T>>, const Tensor<T>&, \
                                     const PerceptualExtractor<T>&, const LossConfig&);      \
  template Tensor<T> loss_total(Graph<T>&, std::span<const Tensor<T>>, const Tensor<T>&,     \
                                const PerceptualExtractor<T>&, const LossConfig&);

FHDR_INSTANTIATE_LOSSES(float)
FHDR_INSTANTIATE_LOSSES(double)

#undef FHDR_INSTANTIATE_LOSSES

}  // namespace fhdr
