// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fhdr/losses.hpp"
#include "fhdr/model.hpp"
#include "fhdr/ops.hpp"

namespace fhdr {

namespace {

using TensorD = Tensor<double>;
using GraphD = Graph<double>;
using Leaves = std::vector<std::pair<std::string, TensorD>>;

TensorD normal(std::mt19937_64& rng, Shape s, double offset = 0.0, bool absolute = false) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(s.numel());
  for (double& x : v) {
    const double d = dist(rng);
    x = (absolute ? std::abs(d) : d) + offset;
  }
  return TensorD(s, std::move(v), true);
}

TensorD uniform(std::mt19937_64& rng, Shape s) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(s.numel());
  for (double& x : v) x = dist(rng);
  return TensorD(s, std::move(v), false);
}

// Scalar sum(x * r) with fixed random weights r, so every output element
// reaches the loss with a distinct upstream gradient.
TensorD project(GraphD& g, const TensorD& x, const TensorD& r) {
  TensorD out(Shape{1, 1, 1, 1}, g.recording() && x.requires_grad());
  double acc = 0.0;
  const auto xd = x.data();
  const auto rd = r.data();
  for (std::size_t i = 0; i < xd.size(); ++i) acc += xd[i] * rd[i];
  out.mutable_data()[0] = acc;
  if (out.requires_grad()) {
    g.record("project", {x}, out, [=]() {
      const double gy = out.grad()[0];
      auto gx = x.grad_buffer();
      const auto w = r.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy * w[i];
    });
  }
  return out;
}

std::vector<bool> relu_masks(const GraphD& g) {
  std::vector<bool> mask;
  for (const auto& op : g.ops()) {
    if (op.name != "relu") continue;
    for (double v : op.output.data()) mask.push_back(v > 0.0);
  }
  return mask;
}

std::vector<std::size_t> probe_indices(std::size_t numel, int samples, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(numel);
  for (std::size_t i = 0; i < numel; ++i) idx[i] = i;
  if (samples <= 0 || static_cast<std::size_t>(samples) >= numel) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(samples));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult gradcheck(const std::string& name, const ScalarFn& fn, const Leaves& leaves,
                          const GradcheckOptions& options, int samples) {
  GradcheckResult result;
  result.name = name;
  for (const auto& [leaf_name, leaf] : leaves) leaf.clear_grad();
  {
    GraphD g;
    const TensorD loss = fn(g);
    g.backward(loss);
  }
  std::mt19937_64 rng(options.seed ^ std::hash<std::string>{}(name));
  for (const auto& [leaf_name, leaf] : leaves) {
    const std::vector<double> analytic =
        leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                        : std::vector<double>(leaf.numel(), 0.0);
    TensorD probe = leaf;
    auto values = probe.mutable_data();
    for (std::size_t i : probe_indices(leaf.numel(), samples, rng)) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      GraphD gp;
      const double lp = fn(gp).item();
      const auto mp = relu_masks(gp);
      values[i] = saved - options.eps;
      GraphD gm;
      const double lm = fn(gm).item();
      const auto mm = relu_masks(gm);
      values[i] = saved;
      if (mp != mm) {
        ++result.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * options.eps);
      result.max_rel_error =
          std::max(result.max_rel_error, gradcheck_relative_error(analytic[i], numeric));
      ++result.checked;
      if (analytic[i] != 0.0) ++result.nonzero;
    }
  }
  result.passed = result.checked > 0 && result.max_rel_error < options.tolerance;
  return result;
}

std::vector<GradcheckResult> gradcheck_ops(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<GradcheckResult> out;
  auto run = [&](const std::string& name, const ScalarFn& fn, const Leaves& leaves) {
    out.push_back(gradcheck(name, fn, leaves, options, 0));
  };

  auto conv_case = [&](const std::string& name, Shape xs, int cout, int k, int dilation) {
    const TensorD x = normal(rng, xs);
    const TensorD w = normal(rng, Shape{cout, xs.c, k, k});
    const TensorD b = normal(rng, Shape{1, cout, 1, 1});
    const TensorD r = uniform(rng, Shape{xs.n, cout, xs.h, xs.w});
    const bool fault = options.inject_conv_fault;
    run(name,
        [=](GraphD& g) {
          TensorD y = ops::conv2d(g, x, w, b, dilation);
          if (fault && g.recording()) {
            // shifts the first weight gradient by a visible amount
            g.record("fault", {w}, y, [=]() { w.grad_buffer()[0] += 0.05; });
          }
          return project(g, y, r);
        },
        {{"input", x}, {"weight", w}, {"bias", b}});
  };
  conv_case("conv2d_3x3", Shape{2, 3, 5, 6}, 4, 3, 1);
  conv_case("conv2d_3x3_dilated", Shape{1, 3, 7, 7}, 2, 3, 2);
  conv_case("conv2d_1x1", Shape{2, 5, 4, 3}, 3, 1, 1);

  {
    const TensorD x = normal(rng, Shape{2, 3, 4, 5});
    const TensorD r = uniform(rng, x.shape());
    run("relu", [=](GraphD& g) { return project(g, ops::relu(g, x), r); }, {{"x", x}});
  }
  {
    const TensorD a = normal(rng, Shape{2, 2, 3, 3});
    const TensorD b = normal(rng, Shape{2, 3, 3, 3});
    const TensorD c = normal(rng, Shape{2, 1, 3, 3});
    const TensorD r2 = uniform(rng, Shape{2, 5, 3, 3});
    const TensorD r3 = uniform(rng, Shape{2, 6, 3, 3});
    run("concat", [=](GraphD& g) { return project(g, ops::concat_channels(g, a, b), r2); },
        {{"a", a}, {"b", b}});
    run("concat_many",
        [=](GraphD& g) {
          const std::vector<TensorD> parts{a, b, c};
          return project(g, ops::concat_channels<double>(g, parts), r3);
        },
        {{"a", a}, {"b", b}, {"c", c}});
  }
  {
    const TensorD x = normal(rng, Shape{2, 5, 3, 4});
    const TensorD r = uniform(rng, Shape{2, 2, 3, 4});
    run("slice", [=](GraphD& g) { return project(g, ops::slice_channels(g, x, 2, 2), r); },
        {{"x", x}});
  }
  {
    const TensorD a = normal(rng, Shape{2, 3, 4, 4});
    const TensorD b = normal(rng, Shape{2, 3, 4, 4});
    const TensorD r = uniform(rng, a.shape());
    run("add", [=](GraphD& g) { return project(g, ops::add(g, a, b), r); }, {{"a", a}, {"b", b}});
    run("add_shared", [=](GraphD& g) { return project(g, ops::add(g, a, a), r); }, {{"a", a}});
    run("scale", [=](GraphD& g) { return project(g, ops::scale(g, a, -1.7), r); }, {{"a", a}});
  }
  {
    const TensorD x = normal(rng, Shape{1, 3, 4, 4}, 0.1, true);
    const TensorD r = uniform(rng, x.shape());
    run("log1p_scaled", [=](GraphD& g) { return project(g, ops::log1p_scaled(g, x, 5000.0), r); },
        {{"x", x}});
  }
  {
    const TensorD a = normal(rng, Shape{2, 3, 3, 3});
    const TensorD b = normal(rng, Shape{2, 3, 3, 3});
    run("l1_mean", [=](GraphD& g) { return ops::l1_mean(g, a, b); }, {{"a", a}, {"b", b}});
    run("sum", [=](GraphD& g) { return ops::scale(g, ops::sum(g, a), 0.3); }, {{"a", a}});
    run("mean", [=](GraphD& g) { return ops::mean(g, a); }, {{"a", a}});
  }
  {
    const TensorD x = normal(rng, Shape{2, 2, 5, 7});
    const TensorD r = uniform(rng, Shape{2, 2, 2, 3});
    run("avg_pool2", [=](GraphD& g) { return project(g, ops::avg_pool2(g, x), r); }, {{"x", x}});
  }
  {
    // loss stack over two iteration outputs, values kept away from 0 where
    // the mu-law curve is steepest
    const TensorD h1 = normal(rng, Shape{1, 3, 8, 8}, 0.1, true);
    const TensorD h2 = normal(rng, Shape{1, 3, 8, 8}, 0.1, true);
    const TensorD gt = uniform(rng, Shape{1, 3, 8, 8});
    const PerceptualExtractor<double> ext;
    const LossConfig cfg;
    run("loss_l1",
        [=](GraphD& g) {
          const std::vector<TensorD> outs{h1, h2};
          return loss_l1<double>(g, outs, gt, cfg);
        },
        {{"h1", h1}, {"h2", h2}});
    run("loss_total",
        [=](GraphD& g) {
          const std::vector<TensorD> outs{h1, h2};
          return loss_total<double>(g, outs, gt, ext, cfg);
        },
        {{"h1", h1}, {"h2", h2}});
  }
  return out;
}

std::vector<GradcheckResult> gradcheck_model(const GradcheckOptions& options) {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.growth_rate = 2;
  cfg.iterations = 2;
  const FhdrParams<double> params = FhdrParams<double>::init(cfg, options.seed);
  std::mt19937_64 rng(options.seed + 1);
  // zero biases put exact zeros in front of ReLUs, where no probe is usable
  std::normal_distribution<double> bias_dist(0.0, 0.1);
  for (const ConvLayer<double>* layer : params.layers()) {
    Tensor<double> bias = layer->bias;
    for (double& b : bias.mutable_data()) b = bias_dist(rng);
  }
  const TensorD ldr = normal(rng, Shape{1, 3, 8, 8});
  const TensorD r1 = uniform(rng, Shape{1, 3, 8, 8});
  const TensorD r2 = uniform(rng, Shape{1, 3, 8, 8});

  // linear read-out of both outputs keeps the check on the network itself
  const ScalarFn fn = [=](GraphD& g) {
    const auto outs = fhdr_forward(g, ldr, params, 2);
    return ops::add(g, project(g, outs[0], r1), project(g, outs[1], r2));
  };

  std::vector<GradcheckResult> out;
  for (const auto& leaf : params.named_parameters()) {
    out.push_back(
        gradcheck("bptt_n2/" + leaf.first, fn, {leaf}, options, options.samples_per_tensor));
  }
  out.push_back(gradcheck("bptt_n2/input", fn, {{"input", ldr}}, options,
                          options.samples_per_tensor));
  return out;
}

}  // namespace fhdr
