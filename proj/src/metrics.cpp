// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "fhdr/tensor.hpp"

namespace fhdr {

double tonemap_value(double h, double mu) {
  if (h < 0.0) throw DomainError("tonemap: negative value " + std::to_string(h));
  return std::log1p(mu * h) / std::log1p(mu);
}

double inverse_tonemap_value(double t, double mu) {
  return std::expm1(t * std::log1p(mu)) / mu;
}

double psnr(std::span<const double> a, std::span<const double> b, double peak, double cap_db) {
  if (a.size() != b.size() || a.empty()) {
    throw ContractError("psnr: buffers must be non-empty and equal in size");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(peak * peak / mse));
}

namespace {

std::vector<double> tonemapped(std::span<const double> v, double mu) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [mu](double x) { return tonemap_value(x, mu); });
  return out;
}

std::vector<double> widen(const ImageHDR& img) {
  return std::vector<double>(img.pixels.begin(), img.pixels.end());
}

void require_same_dims(const char* what, const ImageHDR& a, const ImageHDR& b) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size()) {
    throw ContractError(std::string(what) + ": image dimensions differ (" +
                        std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                        std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  }
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    taps[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Separable "valid" Gaussian filter of one channel of an interleaved image.
std::vector<double> filter_valid(const std::vector<double>& plane, int width, int height) {
  static const auto taps = gaussian_taps();
  const int ow = width - kWindow + 1;
  const int oh = height - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(height) * ow);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * plane[y * width + x + k];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr_tonemapped(std::span<const double> gen, std::span<const double> gt, double mu,
                       double cap_db) {
  const auto a = tonemapped(gen, mu);
  const auto b = tonemapped(gt, mu);
  return psnr(a, b, 1.0, cap_db);
}

double psnr_tonemapped(const ImageHDR& gen, const ImageHDR& gt, double mu, double cap_db) {
  require_same_dims("psnr_tonemapped", gen, gt);
  return psnr_tonemapped(widen(gen), widen(gt), mu, cap_db);
}

double ssim(int width, int height, std::span<const double> a, std::span<const double> b) {
  const std::size_t expected = static_cast<std::size_t>(width) * height * 3;
  if (a.size() != expected || b.size() != expected) {
    throw ContractError("ssim: buffers do not match " + std::to_string(width) + "x" +
                        std::to_string(height) + "x3");
  }
  if (width < kWindow || height < kWindow) {
    throw ContractError("ssim: image " + std::to_string(width) + "x" + std::to_string(height) +
                        " is smaller than the 11x11 window");
  }
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a[i * 3 + c];
      y[i] = b[i * 3 + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, width, height);
    const auto my = filter_valid(y, width, height);
    const auto sxx = filter_valid(xx, width, height);
    const auto syy = filter_valid(yy, width, height);
    const auto sxy = filter_valid(xy, width, height);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

double ssim(const ImageHDR& a, const ImageHDR& b) {
  require_same_dims("ssim", a, b);
  return ssim(a.width, a.height, widen(a), widen(b));
}

double ssim_tonemapped(const ImageHDR& gen, const ImageHDR& gt, double mu) {
  require_same_dims("ssim_tonemapped", gen, gt);
  return ssim(gen.width, gen.height, tonemapped(widen(gen), mu), tonemapped(widen(gt), mu));
}

void MetricReport::summarize() {
  std::map<int, std::pair<IterationMean, int>> acc;
  for (const auto& r : rows) {
    auto& [m, count] = acc[r.iteration];
    m.iteration = r.iteration;
    m.psnr_db += r.psnr_db;
    m.ssim += r.ssim;
    ++count;
  }
  means.clear();
  for (auto& [it, entry] : acc) {
    IterationMean m = entry.first;
    m.psnr_db /= entry.second;
    m.ssim /= entry.second;
    means.push_back(m);
  }
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string MetricReport::rows_csv() const {
  std::string out = "image_id,iteration,psnr_db,ssim\n";
  for (const auto& r : rows) {
    out += r.image_id + "," + std::to_string(r.iteration) + "," + fmt(r.psnr_db) + "," +
           fmt(r.ssim) + "\n";
  }
  return out;
}

std::string MetricReport::means_csv() const {
  std::string out = "iteration,psnr_db,ssim\n";
  for (const auto& m : means) {
    out += std::to_string(m.iteration) + "," + fmt(m.psnr_db) + "," + fmt(m.ssim) + "\n";
  }
  return out;
}

}  // namespace fhdr
