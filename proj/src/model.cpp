// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "fhdr/ops.hpp"

namespace fhdr {

void ModelConfig::validate() const {
  auto fail = [this](const std::string& what) {
    throw ContractError("model config: " + what + " (" + str() + ")");
  };
  if (base_channels <= 0) fail("base_channels must be positive");
  if (growth_rate <= 0) fail("growth_rate must be positive");
  if (num_ddb <= 0) fail("num_ddb must be positive");
  if (dilated_layers_per_ddb <= 0) fail("dilated_layers_per_ddb must be positive");
  if (iterations < 1) fail("iterations must be >= 1");
  if (dilation < 1) fail("dilation must be >= 1");
}

std::string ModelConfig::str() const {
  std::ostringstream os;
  os << "base_channels=" << base_channels << " growth_rate=" << growth_rate
     << " num_ddb=" << num_ddb << " dilated_layers_per_ddb=" << dilated_layers_per_ddb
     << " iterations=" << iterations << " dilation=" << dilation;
  return os.str();
}

namespace {

// Uniform in [-bound, bound) from the top 53 bits, independent of the
// standard library's distribution implementation.
template <typename T>
T uniform(std::mt19937_64& rng, double bound) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return static_cast<T>((2.0 * u - 1.0) * bound);
}

template <typename T>
ConvLayer<T> make_layer(std::string name, int cin, int cout, int k, int dilation,
                        std::mt19937_64& rng) {
  ConvLayer<T> layer;
  layer.name = std::move(name);
  layer.dilation = dilation;
  layer.weight = Tensor<T>(Shape{cout, cin, k, k}, true);
  layer.bias = Tensor<T>(Shape{1, cout, 1, 1}, true);
  const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
  for (T& v : layer.weight.mutable_data()) v = uniform<T>(rng, bound);
  return layer;
}

template <typename T>
Tensor<T> conv_relu(Graph<T>& g, const Tensor<T>& x, const ConvLayer<T>& layer) {
  return ops::relu(g, ops::conv2d(g, x, layer.weight, layer.bias, layer.dilation));
}

}  // namespace

template <typename T>
FhdrParams<T> FhdrParams<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int b = config.base_channels;
  const int gr = config.growth_rate;
  FhdrParams p;
  p.config = config;
  p.feb1 = make_layer<T>("feb.conv1", 3, b, 3, 1, rng);
  p.feb2 = make_layer<T>("feb.conv2", b, b, 3, 1, rng);
  p.fbb_fuse = make_layer<T>("fbb.fuse", 2 * b, b, 1, 1, rng);
  for (int d = 0; d < config.num_ddb; ++d) {
    const std::string prefix = "fbb.ddb" + std::to_string(d);
    DdbParams<T> ddb;
    ddb.fuse = make_layer<T>(prefix + ".fuse", 2 * b, b, 1, 1, rng);
    for (int l = 0; l < config.dilated_layers_per_ddb; ++l) {
      ddb.dense.push_back(make_layer<T>(prefix + ".dense" + std::to_string(l), b + l * gr, gr, 3,
                                        config.dilation, rng));
    }
    ddb.compress = make_layer<T>(prefix + ".compress",
                                 b + config.dilated_layers_per_ddb * gr, b, 1, 1, rng);
    p.ddbs.push_back(std::move(ddb));
  }
  p.fbb_tail = make_layer<T>("fbb.tail", b, b, 3, 1, rng);
  p.hrb1 = make_layer<T>("hrb.conv1", b, b, 3, 1, rng);
  p.hrb2 = make_layer<T>("hrb.conv2", b, 3, 3, 1, rng);
  return p;
}

template <typename T>
std::vector<const ConvLayer<T>*> FhdrParams<T>::layers() const {
  std::vector<const ConvLayer<T>*> out{&feb1, &feb2, &fbb_fuse};
  for (const auto& ddb : ddbs) {
    out.push_back(&ddb.fuse);
    for (const auto& l : ddb.dense) out.push_back(&l);
    out.push_back(&ddb.compress);
  }
  out.push_back(&fbb_tail);
  out.push_back(&hrb1);
  out.push_back(&hrb2);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> FhdrParams<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for (const auto* layer : layers()) {
    out.emplace_back(layer->name + ".weight", layer->weight);
    out.emplace_back(layer->name + ".bias", layer->bias);
  }
  return out;
}

template <typename T>
std::size_t FhdrParams<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : named_parameters()) total += t.numel();
  return total;
}

template <typename T>
FeedbackState<T> FeedbackState<T>::initial(const Tensor<T>& f_in, int num_ddb) {
  FeedbackState s;
  s.global_hidden = f_in;
  s.local_hidden.resize(static_cast<std::size_t>(num_ddb));
  return s;
}

template <typename T>
FebOutput<T> feb_forward(Graph<T>& g, const Tensor<T>& ldr, const FhdrParams<T>& params) {
  if (ldr.shape().c != 3) {
    throw ContractError("feb_forward: expected a 3-channel LDR image, got " + ldr.shape().str());
  }
  typename Graph<T>::Scope scope(g, "feb");
  FebOutput<T> out;
  out.f_in1 = conv_relu(g, ldr, params.feb1);
  out.f_in = conv_relu(g, out.f_in1, params.feb2);
  return out;
}

template <typename T>
DdbOutput<T> ddb_forward(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& local_hidden,
                         const DdbParams<T>& ddb, int base_channels) {
  if (x.shape().c != base_channels || local_hidden.shape() != x.shape()) {
    throw ContractError("ddb_forward: expected two " + std::to_string(base_channels) +
                        "-channel maps of equal shape, got " + x.shape().str() + " and " +
                        local_hidden.shape().str());
  }
  std::vector<Tensor<T>> features;
  features.reserve(ddb.dense.size() + 1);
  features.push_back(conv_relu(g, ops::concat_channels(g, x, local_hidden), ddb.fuse));
  for (const auto& layer : ddb.dense) {
    const Tensor<T> in = features.size() == 1
                             ? features.front()
                             : ops::concat_channels<T>(g, std::span<const Tensor<T>>(features));
    features.push_back(conv_relu(g, in, layer));
  }
  const Tensor<T> all = ops::concat_channels<T>(g, std::span<const Tensor<T>>(features));
  DdbOutput<T> out;
  out.out = conv_relu(g, all, ddb.compress);
  out.new_local_hidden = out.out;
  return out;
}

template <typename T>
FbbOutput<T> fbb_forward(Graph<T>& g, const Tensor<T>& f_in, const FeedbackState<T>& state,
                         const FhdrParams<T>& params) {
  typename Graph<T>::Scope scope(g, "fbb");
  const auto& cfg = params.config;
  const Tensor<T>& hidden = state.global_hidden.defined() ? state.global_hidden : f_in;
  Tensor<T> x = conv_relu(g, ops::concat_channels(g, f_in, hidden), params.fbb_fuse);

  FbbOutput<T> out;
  out.state.local_hidden.resize(params.ddbs.size());
  for (std::size_t d = 0; d < params.ddbs.size(); ++d) {
    typename Graph<T>::Scope ddb_scope(g, "ddb" + std::to_string(d));
    const bool has_local = d < state.local_hidden.size() && state.local_hidden[d].defined();
    const Tensor<T>& local = has_local ? state.local_hidden[d] : x;
    auto r = ddb_forward(g, x, local, params.ddbs[d], cfg.base_channels);
    out.state.local_hidden[d] = r.new_local_hidden;
    x = r.out;
  }
  out.f_fbb = conv_relu(g, x, params.fbb_tail);
  out.state.global_hidden = out.f_fbb;
  return out;
}

template <typename T>
Tensor<T> hrb_forward(Graph<T>& g, const Tensor<T>& f_res, const FhdrParams<T>& params) {
  typename Graph<T>::Scope scope(g, "hrb");
  return conv_relu(g, conv_relu(g, f_res, params.hrb1), params.hrb2);
}

template <typename T>
std::vector<Tensor<T>> fhdr_forward(Graph<T>& g, const Tensor<T>& ldr,
                                    const FhdrParams<T>& params, int iterations) {
  if (iterations < 1) {
    throw ContractError("fhdr_forward: iterations must be >= 1, got " +
                        std::to_string(iterations));
  }
  const FebOutput<T> feb = feb_forward(g, ldr, params);
  FeedbackState<T> state =
      FeedbackState<T>::initial(feb.f_in, static_cast<int>(params.ddbs.size()));
  std::vector<Tensor<T>> outputs;
  outputs.reserve(static_cast<std::size_t>(iterations));
  for (int t = 1; t <= iterations; ++t) {
    typename Graph<T>::Scope scope(g, "t" + std::to_string(t));
    FbbOutput<T> fbb = fbb_forward(g, feb.f_in, state, params);
    const Tensor<T> f_res = ops::add(g, feb.f_in1, fbb.f_fbb);
    outputs.push_back(hrb_forward(g, f_res, params));
    state = std::move(fbb.state);
  }
  return outputs;
}

std::size_t param_count(const ModelConfig& config) {
  config.validate();
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) {
    return cout * cin * k * k + cout;
  };
  const std::size_t b = config.base_channels;
  const std::size_t gr = config.growth_rate;
  const std::size_t layers = config.dilated_layers_per_ddb;
  std::size_t ddb = conv(2 * b, b, 1) + conv(b + layers * gr, b, 1);
  for (std::size_t l = 0; l < layers; ++l) ddb += conv(b + l * gr, gr, 3);
  return conv(3, b, 3) + conv(b, b, 3)                                    // FEB
         + conv(2 * b, b, 1) + config.num_ddb * ddb + conv(b, b, 3)      // FBB
         + conv(b, b, 3) + conv(b, 3, 3);                                 // HRB
}

LayerAudit audit_layers(const ModelConfig& config) {
  config.validate();
  const auto params = FhdrParams<float>::init(config, 0);
  Graph<float> g;
  const Tensor<float> ldr(Shape{1, 3, 4, 4});
  fhdr_forward(g, ldr, params, 1);

  LayerAudit audit;
  audit.feb = g.count("conv2d", "feb");
  audit.fbb = g.count("conv2d", "t1/fbb");
  audit.hrb = g.count("conv2d", "t1/hrb");
  audit.per_ddb = g.count("conv2d", "t1/fbb/ddb0");
  for (const auto& op : g.ops()) {
    if (op.name == "concat" && op.scope == "t1/fbb/ddb0") {
      audit.ddb_concat_channels = op.output.shape().c;  // last one feeds the compression
    }
  }
  return audit;
}

template struct FhdrParams<float>;
template struct FhdrParams<double>;
template struct FeedbackState<float>;
template struct FeedbackState<double>;

#define FHDR_INSTANTIATE_MODEL(T)                                                            \
  template FebOutput<T> feb_forward(Graph<T>&, const Tensor<T>&, const FhdrParams<T>&);      \
  template DdbOutput<T> ddb_forward(Graph<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                    const DdbParams<T>&, int);                               \
  template FbbOutput<T> fbb_forward(Graph<T>&, const Tensor<T>&, const FeedbackState<T>&,    \
                                    const FhdrParams<T>&);                                   \
  template Tensor<T> hrb_forward(Graph<T>&, const Tensor<T>&, const FhdrParams<T>&);         \
  template std::vector<Tensor<T>> fhdr_forward(Graph<T>&, const Tensor<T>&,                  \
                                               const FhdrParams<T>&, int);

FHDR_INSTANTIATE_MODEL(float)
FHDR_INSTANTIATE_MODEL(double)

#undef FHDR_INSTANTIATE_MODEL

}  // namespace fhdr
