// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fhdr/parallel.hpp"

namespace fhdr::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool tracks(const Graph<T>& g, std::initializer_list<const Tensor<T>*> inputs) {
  if (!g.recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                        b.shape().str());
  }
}

// Column matrix [Cin*k*k, H*W] for one image; out-of-bounds taps are zero.
template <typename T>
void im2col(const T* image, int channels, int height, int width, int k, int dilation, T* col) {
  const int pad = (k - 1) * dilation / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  T* row = col;
  for (int c = 0; c < channels; ++c) {
    const T* src = image + c * plane;
    for (int ky = 0; ky < k; ++ky) {
      const int dy = ky * dilation - pad;
      for (int kx = 0; kx < k; ++kx, row += plane) {
        const int dx = kx * dilation - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(width, width - dx);
        for (int y = 0; y < height; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * width;
          const int sy = y + dy;
          if (sy < 0 || sy >= height || x0 >= x1) {
            std::fill(dst, dst + width, T(0));
            continue;
          }
          std::fill(dst, dst + x0, T(0));
          const T* line = src + static_cast<std::size_t>(sy) * width + dx;
          std::copy(line + x0, line + x1, dst + x0);
          std::fill(dst + x1, dst + width, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image gradient.
template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int k, int dilation,
                T* image) {
  const int pad = (k - 1) * dilation / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const T* row = col;
  for (int c = 0; c < channels; ++c) {
    T* dst = image + c * plane;
    for (int ky = 0; ky < k; ++ky) {
      const int dy = ky * dilation - pad;
      for (int kx = 0; kx < k; ++kx, row += plane) {
        const int dx = kx * dilation - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(width, width - dx);
        for (int y = 0; y < height; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= height || x0 >= x1) continue;
          const T* src = row + static_cast<std::size_t>(y) * width;
          T* line = dst + static_cast<std::size_t>(sy) * width + dx;
          for (int x = x0; x < x1; ++x) line[x] += src[x];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int dilation) {
  const Shape in = input.shape();
  const Shape ws = weight.shape();
  if (dilation < 1) {
    throw ContractError("conv2d: dilation must be >= 1, got " + std::to_string(dilation));
  }
  if (ws.h != ws.w || (ws.h != 1 && ws.h != 3)) {
    throw ContractError("conv2d: kernel must be 1x1 or 3x3, got " + ws.str());
  }
  if (ws.c != in.c) {
    throw ContractError("conv2d: input has " + std::to_string(in.c) +
                        " channels but weight expects " + std::to_string(ws.c));
  }
  if (bias.numel() != static_cast<std::size_t>(ws.n)) {
    throw ContractError("conv2d: bias must hold " + std::to_string(ws.n) + " values");
  }

  const int k = ws.h;
  const int cin = in.c;
  const int cout = ws.n;
  const int kdim = cin * k * k;
  const auto hw = static_cast<Eigen::Index>(in.plane());
  Tensor<T> out(Shape{in.n, cout, in.h, in.w}, tracks(g, {&input, &weight, &bias}));

  const T* x = input.data().data();
  const T* w = weight.data().data();
  const T* b = bias.data().data();
  T* y = out.mutable_data().data();
  const std::size_t in_stride = static_cast<std::size_t>(cin) * hw;
  const std::size_t out_stride = static_cast<std::size_t>(cout) * hw;

  parallel_for(static_cast<std::size_t>(in.n), [&](std::size_t i) {
    Eigen::Map<const RowMat<T>> wm(w, cout, kdim);
    Eigen::Map<RowMat<T>> ym(y + i * out_stride, cout, hw);
    if (k == 1) {
      ym.noalias() = wm * Eigen::Map<const RowMat<T>>(x + i * in_stride, kdim, hw);
    } else {
      AlignedVector<T> col(static_cast<std::size_t>(kdim) * hw);
      im2col(x + i * in_stride, cin, in.h, in.w, k, dilation, col.data());
      ym.noalias() = wm * Eigen::Map<const RowMat<T>>(col.data(), kdim, hw);
    }
    ym.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(b, cout);
  });

  if (out.requires_grad()) {
    g.record("conv2d", {input, weight, bias}, out, [=]() {
      const T* gy = out.grad().data();
      const T* xd = input.data().data();
      const T* wd = weight.data().data();
      const std::size_t batch = static_cast<std::size_t>(in.n);
      Eigen::Map<const RowMat<T>> wm(wd, cout, kdim);

      if (input.requires_grad()) {
        T* gx = input.grad_buffer().data();
        parallel_for(batch, [&](std::size_t i) {
          Eigen::Map<const RowMat<T>> gym(gy + i * out_stride, cout, hw);
          if (k == 1) {
            Eigen::Map<RowMat<T>> gxm(gx + i * in_stride, kdim, hw);
            gxm.noalias() += wm.transpose() * gym;
          } else {
            RowMat<T> dcol(kdim, hw);
            dcol.noalias() = wm.transpose() * gym;
            col2im_add(dcol.data(), cin, in.h, in.w, k, dilation, gx + i * in_stride);
          }
        });
      }

      if (weight.requires_grad()) {
        // Per-image partials summed in image order keep results independent of threading.
        std::vector<RowMat<T>> partial(batch);
        parallel_for(batch, [&](std::size_t i) {
          Eigen::Map<const RowMat<T>> gym(gy + i * out_stride, cout, hw);
          if (k == 1) {
            partial[i].noalias() =
                gym * Eigen::Map<const RowMat<T>>(xd + i * in_stride, kdim, hw).transpose();
          } else {
            AlignedVector<T> col(static_cast<std::size_t>(kdim) * hw);
            im2col(xd + i * in_stride, cin, in.h, in.w, k, dilation, col.data());
            partial[i].noalias() =
                gym * Eigen::Map<const RowMat<T>>(col.data(), kdim, hw).transpose();
          }
        });
        Eigen::Map<RowMat<T>> gw(weight.grad_buffer().data(), cout, kdim);
        for (const auto& p : partial) gw += p;
      }

      if (bias.requires_grad()) {
        T* gb = bias.grad_buffer().data();
        for (std::size_t i = 0; i < batch; ++i) {
          Eigen::Map<const RowMat<T>> gym(gy + i * out_stride, cout, hw);
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(gb, cout) += gym.rowwise().sum();
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& x) {
  Tensor<T> out(x.shape(), tracks(g, {&x}));
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] < T(0) ? T(0) : src[i];  // NaN passes through
  if (out.requires_grad()) {
    g.record("relu", {x}, out, [=]() {
      auto gy = out.grad();
      auto xv = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xv[i] > T(0)) gx[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Graph<T>& g, std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ContractError("concat_channels: batch/spatial mismatch " + first.str() + " vs " +
                          s.str());
    }
    channels += s.c;
    needs_grad = needs_grad || p.requires_grad();
  }
  Tensor<T> out(Shape{first.n, channels, first.h, first.w}, g.recording() && needs_grad);
  const std::size_t plane = first.plane();
  const std::size_t out_stride = static_cast<std::size_t>(channels) * plane;
  T* dst = out.mutable_data().data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = static_cast<std::size_t>(p.shape().c) * plane;
    const T* src = p.data().data();
    for (int n = 0; n < first.n; ++n) {
      std::copy(src + n * block, src + (n + 1) * block, dst + n * out_stride + offset);
    }
    offset += block;
  }
  if (out.requires_grad()) {
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    g.record("concat", inputs, out, [=]() {
      const T* gy = out.grad().data();
      std::size_t off = 0;
      for (const auto& p : inputs) {
        const std::size_t block = static_cast<std::size_t>(p.shape().c) * plane;
        if (p.requires_grad()) {
          T* gx = p.grad_buffer().data();
          for (int n = 0; n < first.n; ++n) {
            const T* src = gy + n * out_stride + off;
            T* d = gx + n * block;
            for (std::size_t j = 0; j < block; ++j) d[j] += src[j];
          }
        }
        off += block;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_channels<T>(g, std::span<const Tensor<T>>(parts));
}

template <typename T>
Tensor<T> slice_channels(Graph<T>& g, const Tensor<T>& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw ContractError("slice_channels: range [" + std::to_string(begin) + ", " +
                        std::to_string(begin + count) + ") outside " + std::to_string(s.c) +
                        " channels");
  }
  Tensor<T> out(Shape{s.n, count, s.h, s.w}, tracks(g, {&x}));
  const std::size_t plane = s.plane();
  const std::size_t in_stride = static_cast<std::size_t>(s.c) * plane;
  const std::size_t block = static_cast<std::size_t>(count) * plane;
  const T* src = x.data().data();
  T* dst = out.mutable_data().data();
  for (int n = 0; n < s.n; ++n) {
    const T* from = src + n * in_stride + begin * plane;
    std::copy(from, from + block, dst + n * block);
  }
  if (out.requires_grad()) {
    g.record("slice", {x}, out, [=]() {
      const T* gy = out.grad().data();
      T* gx = x.grad_buffer().data();
      for (int n = 0; n < s.n; ++n) {
        T* to = gx + n * in_stride + begin * plane;
        for (std::size_t j = 0; j < block; ++j) to[j] += gy[n * block + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape(), tracks(g, {&a, &b}));
  auto av = a.data();
  auto bv = b.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    g.record("add", {a, b}, out, [=]() {
      auto gy = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gx = t->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape(), tracks(g, {&x}));
  auto src = x.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * factor;
  if (out.requires_grad()) {
    g.record("scale", {x}, out, [=]() {
      auto gy = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> log1p_scaled(Graph<T>& g, const Tensor<T>& x, T mu) {
  if (!(mu > T(0))) throw ContractError("log1p_scaled: mu must be positive");
  auto src = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] < T(0)) {  // NaN propagates; callers check finiteness
      throw DomainError("log1p_scaled: negative input " + std::to_string(src[i]) +
                        " at flat index " + std::to_string(i));
    }
  }
  const T denom = std::log1p(mu);
  Tensor<T> out(x.shape(), tracks(g, {&x}));
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::log1p(mu * src[i]) / denom;
  if (out.requires_grad()) {
    g.record("log1p_scaled", {x}, out, [=]() {
      auto gy = out.grad();
      auto xv = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += gy[i] * mu / ((T(1) + mu * xv[i]) * denom);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> l1_mean(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("l1_mean", a, b);
  if (a.numel() == 0) throw ContractError("l1_mean: empty tensors");
  auto av = a.data();
  auto bv = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += std::abs(static_cast<double>(av[i]) - bv[i]);
  const auto count = static_cast<T>(av.size());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / av.size()));
  out.set_requires_grad(tracks(g, {&a, &b}));
  if (out.requires_grad()) {
    g.record("l1_mean", {a, b}, out, [=]() {
      const T gy = out.grad()[0] / count;
      auto x = a.data();
      auto y = b.data();
      const bool ga = a.requires_grad();
      const bool gb = b.requires_grad();
      T* da = ga ? a.grad_buffer().data() : nullptr;
      T* db = gb ? b.grad_buffer().data() : nullptr;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const T s = x[i] > y[i] ? gy : (x[i] < y[i] ? -gy : T(0));
        if (ga) da[i] += s;
        if (gb) db[i] -= s;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  out.set_requires_grad(tracks(g, {&x}));
  if (out.requires_grad()) {
    g.record("sum", {x}, out, [=]() {
      const T gy = out.grad()[0];
      for (T& v : x.grad_buffer()) v += gy;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  return scale(g, sum(g, x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> avg_pool2(Graph<T>& g, const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h < 2 || s.w < 2) throw ContractError("avg_pool2: input smaller than 2x2: " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out(os, tracks(g, {&x}));
  const T* src = x.data().data();
  T* dst = out.mutable_data().data();
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const T* in = src + p * s.plane();
    T* o = dst + p * os.plane();
    for (int y = 0; y < os.h; ++y) {
      const T* r0 = in + (2 * y) * s.w;
      const T* r1 = r0 + s.w;
      for (int xx = 0; xx < os.w; ++xx) {
        o[y * os.w + xx] = T(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
      }
    }
  }
  if (out.requires_grad()) {
    g.record("avg_pool2", {x}, out, [=]() {
      const T* gy = out.grad().data();
      T* gx = x.grad_buffer().data();
      for (int p = 0; p < planes; ++p) {
        T* in = gx + p * s.plane();
        const T* o = gy + p * os.plane();
        for (int y = 0; y < os.h; ++y) {
          T* r0 = in + (2 * y) * s.w;
          T* r1 = r0 + s.w;
          for (int xx = 0; xx < os.w; ++xx) {
            const T v = T(0.25) * o[y * os.w + xx];
            r0[2 * xx] += v;
            r0[2 * xx + 1] += v;
            r1[2 * xx] += v;
            r1[2 * xx + 1] += v;
          }
        }
      }
    });
  }
  return out;
}

#define FHDR_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                            int);                                                            \
  template Tensor<T> relu(Graph<T>&, const Tensor<T>&);                                      \
  template Tensor<T> concat_channels(Graph<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> concat_channels(Graph<T>&, std::span<const Tensor<T>>);                 \
  template Tensor<T> slice_channels(Graph<T>&, const Tensor<T>&, int, int);                  \
  template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                  \
  template Tensor<T> log1p_scaled(Graph<T>&, const Tensor<T>&, T);                           \
  template Tensor<T> l1_mean(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sum(Graph<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mean(Graph<T>&, const Tensor<T>&);                                      \
  template Tensor<T> avg_pool2(Graph<T>&, const Tensor<T>&);

FHDR_INSTANTIATE_OPS(float)
FHDR_INSTANTIATE_OPS(double)

#undef FHDR_INSTANTIATE_OPS

}  // namespace fhdr::ops
