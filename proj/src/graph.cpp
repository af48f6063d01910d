// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/graph.hpp"

#include <algorithm>

namespace fhdr {

template <typename T>
void Graph<T>::record(std::string_view name, std::vector<Tensor<T>> inputs, Tensor<T> output,
                      std::function<void()> backward) {
  if (!recording_) return;
  ops_.push_back(OpRecord{std::string(name), scope_, std::move(inputs), std::move(output),
                          std::move(backward)});
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  // Intermediate results start from zero so a second call does not double count them.
  for (auto& op : ops_) {
    if (op.output.requires_grad()) op.output.clear_grad();
  }
  Tensor<T> seed = loss;
  if (!seed.requires_grad()) return;
  seed.grad_buffer()[0] += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (!it->output.requires_grad() || !it->output.has_grad()) continue;
    it->backward();
  }
}

template <typename T>
std::size_t Graph<T>::count(std::string_view name, std::string_view prefix) const {
  return static_cast<std::size_t>(std::count_if(ops_.begin(), ops_.end(), [&](const OpRecord& op) {
    return op.name == name && std::string_view(op.scope).substr(0, prefix.size()) == prefix;
  }));
}

template <typename T>
Graph<T>::Scope::Scope(Graph& graph, std::string_view label)
    : graph_(graph), previous_length_(graph.scope_.size()) {
  if (!graph_.scope_.empty()) graph_.scope_ += '/';
  graph_.scope_ += label;
}

template <typename T>
Graph<T>::Scope::~Scope() {
  graph_.scope_.resize(previous_length_);
}

template class Graph<float>;
template class Graph<double>;

}  // namespace fhdr
