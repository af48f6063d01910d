// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fhdr {

/// Raised when a caller breaks an operation's shape or argument contract.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an input lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// NCHW extents.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] std::string str() const;
  bool operator==(const Shape&) const = default;
};

/// Cache-line aligned allocator. Vectorized GEMM picks its summation order from
/// buffer alignment, so every tensor buffer shares one alignment to keep
/// results independent of where the heap places it.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense NCHW tensor with an optional gradient buffer.
///
/// Copies share storage, the way parameters are shared across feedback
/// iterations. Use clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(shape, requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) {
    return full(Shape{1, 1, 1, 1}, value, requires_grad);
  }

  [[nodiscard]] bool defined() const { return static_cast<bool>(s_); }
  [[nodiscard]] const Shape& shape() const { return storage().shape; }
  [[nodiscard]] std::size_t numel() const { return storage().data.size(); }

  [[nodiscard]] std::span<const T> data() const { return storage().data; }
  /// Writable view; only parameter updates and input construction should use it.
  [[nodiscard]] std::span<T> mutable_data() { return storage().data; }

  [[nodiscard]] T at(int n, int c, int h, int w) const;
  [[nodiscard]] T item() const;

  [[nodiscard]] bool requires_grad() const { return storage().requires_grad; }
  void set_requires_grad(bool value) { storage().requires_grad = value; }

  [[nodiscard]] bool has_grad() const { return !storage().grad.empty(); }
  [[nodiscard]] std::span<const T> grad() const { return storage().grad; }
  /// Grad buffer, allocated (zeroed) on first access. Gradients are the only
  /// state a const tensor lets callers mutate.
  [[nodiscard]] std::span<T> grad_buffer() const;
  void zero_grad() const;
  void clear_grad() const { storage().grad.clear(); }

  [[nodiscard]] Tensor clone() const;
  [[nodiscard]] bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  struct Storage {
    Shape shape;
    AlignedVector<T> data;
    AlignedVector<T> grad;
    bool requires_grad = false;
  };

  Storage& storage() const;

  std::shared_ptr<Storage> s_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fhdr
