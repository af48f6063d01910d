// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "fhdr/tensor.hpp"

namespace fhdr {

/// Tape of executed operations. Backward replays the tape in exact reverse
/// order; a tensor consumed by several operations accumulates their gradients.
template <typename T>
class Graph {
 public:
  struct OpRecord {
    std::string name;
    std::string scope;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    /// Reads output.grad() and accumulates into the inputs that require grad.
    std::function<void()> backward;
  };

  /// A graph that does not record is used for inference.
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  [[nodiscard]] bool recording() const { return recording_; }

  void record(std::string_view name, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Intermediate gradients are
  /// reset first; leaf gradients accumulate across calls.
  void backward(const Tensor<T>& loss);

  [[nodiscard]] const std::vector<OpRecord>& ops() const { return ops_; }
  [[nodiscard]] std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  /// Number of recorded ops called `name` whose scope starts with `prefix`.
  [[nodiscard]] std::size_t count(std::string_view name, std::string_view prefix = {}) const;

  [[nodiscard]] const std::string& scope() const { return scope_; }

  /// RAII scope label attached to every op recorded while it is alive.
  class Scope {
   public:
    Scope(Graph& graph, std::string_view label);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph& graph_;
    std::size_t previous_length_;
  };

 private:
  bool recording_;
  std::string scope_;
  std::vector<OpRecord> ops_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace fhdr
