// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fhdr/image_io.hpp"

namespace fhdr {

inline constexpr double kPsnrCapDb = 100.0;

/// Scalar mu-law curve, log(1 + mu*h) / log(1 + mu).
double tonemap_value(double h, double mu);
/// Inverse of tonemap_value.
double inverse_tonemap_value(double t, double mu);

/// 10*log10(peak^2 / MSE), capped; identical inputs give the cap.
double psnr(std::span<const double> a, std::span<const double> b, double peak = 1.0,
            double cap_db = kPsnrCapDb);

/// PSNR between mu-law tonemapped versions of two linear HDR buffers.
double psnr_tonemapped(std::span<const double> gen, std::span<const double> gt, double mu,
                       double cap_db = kPsnrCapDb);
double psnr_tonemapped(const ImageHDR& gen, const ImageHDR& gt, double mu,
                       double cap_db = kPsnrCapDb);

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, K1 0.01,
/// K2 0.03, range 1), averaged over the three channels of interleaved RGB.
double ssim(int width, int height, std::span<const double> a, std::span<const double> b);
double ssim(const ImageHDR& a, const ImageHDR& b);
/// SSIM of the mu-law tonemapped images.
double ssim_tonemapped(const ImageHDR& gen, const ImageHDR& gt, double mu);

struct MetricRow {
  std::string image_id;
  int iteration = 1;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct IterationMean {
  int iteration = 1;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<IterationMean> means;

  /// Recomputes `means` from `rows`.
  void summarize();
  /// image_id,iteration,psnr_db,ssim; one row per image and iteration.
  [[nodiscard]] std::string rows_csv() const;
  /// iteration,psnr_db,ssim
  [[nodiscard]] std::string means_csv() const;
};

}  // namespace fhdr
