// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Central finite-difference checks of the reverse-mode gradients, run in
// double precision.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fhdr/graph.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr {

struct GradcheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  /// Probed elements per tensor in the model suite; 0 probes every element.
  int samples_per_tensor = 16;
  /// Negative control: corrupts the weight gradient of the conv checks.
  bool inject_conv_fault = false;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Probes dropped because the +/- perturbations saw different ReLU masks.
  std::size_t skipped = 0;
  /// Probed elements whose analytic gradient is nonzero.
  std::size_t nonzero = 0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, 1e-6).
double gradcheck_relative_error(double analytic, double numeric);

using ScalarFn = std::function<Tensor<double>(Graph<double>&)>;

/// Checks d fn / d leaf for every leaf. fn must rebuild the graph from the
/// leaf tensors each call. `samples` elements per leaf (0 = all).
GradcheckResult gradcheck(const std::string& name, const ScalarFn& fn,
                          const std::vector<std::pair<std::string, Tensor<double>>>& leaves,
                          const GradcheckOptions& options, int samples);

/// Every primitive op plus the loss stack.
std::vector<GradcheckResult> gradcheck_ops(const GradcheckOptions& options);

/// Tiny model (8x8, n = 2) unrolled through both feedback iterations; one
/// result per parameter tensor and one for the input.
std::vector<GradcheckResult> gradcheck_model(const GradcheckOptions& options);

}  // namespace fhdr
