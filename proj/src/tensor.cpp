// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace fhdr {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

namespace {

void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    throw ContractError("tensor: negative extent in shape " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : s_(std::make_shared<Storage>()) {
  check_shape(shape);
  s_->shape = shape;
  s_->data.assign(shape.numel(), T(0));
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  check_shape(shape);
  if (data.size() != shape.numel()) {
    throw ContractError("tensor: data length " + std::to_string(data.size()) +
                        " does not match shape " + shape.str());
  }
  s_->shape = shape;
  s_->data.assign(data.begin(), data.end());
  s_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  Tensor t(shape, requires_grad);
  std::fill(t.s_->data.begin(), t.s_->data.end(), value);
  return t;
}

template <typename T>
typename Tensor<T>::Storage& Tensor<T>::storage() const {
  if (!s_) throw ContractError("tensor: use of undefined tensor");
  return *s_;
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 || w >= s.w) {
    throw ContractError("tensor: index out of range for shape " + s.str());
  }
  return s_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("tensor: item() on non-scalar of shape " + shape().str());
  }
  return s_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  Storage& s = storage();
  if (s.grad.empty()) s.grad.assign(s.data.size(), T(0));
  return s.grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  Storage& s = storage();
  if (!s.grad.empty()) std::fill(s.grad.begin(), s.grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(shape(), std::vector<T>(data().begin(), data().end()), requires_grad());
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace fhdr
