// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fhdr/image_io.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr {

/// Independent 64-bit seed for sub-stream `salt` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

/// Parametric camera response on [0,1]: a gamma curve x^g, or a logistic
/// curve with slope s and midpoint m rescaled so that 0 -> 0 and 1 -> 1.
struct CameraCurve {
  enum class Kind { gamma, sigmoid };

  Kind kind = Kind::gamma;
  double gamma = 1.0 / 2.2;
  double slope = 6.0;
  double midpoint = 0.5;

  static CameraCurve make_gamma(double exponent);
  static CameraCurve make_sigmoid(double slope, double midpoint = 0.5);

  [[nodiscard]] double apply(double x) const;
  [[nodiscard]] double inverse(double y) const;

  /// "gamma:<g>" or "sigmoid:<s>:<m>".
  [[nodiscard]] std::string descriptor() const;
  static CameraCurve parse(std::string_view descriptor);
  void validate() const;
};

/// Gamma exponents 1/1.8, 1/2.0, 1/2.2, 1/2.4 and sigmoids with slopes 4, 6, 8.
std::vector<CameraCurve> default_curves();

struct SynthSpec {
  double exposure_ev = 0.0;
  CameraCurve curve;
  int quantize_bits = 8;

  void validate() const;
};

/// Divides by the image maximum and multiplies the divisor into norm_scale.
/// An all-zero image is returned unchanged.
ImageHDR normalize_hdr(ImageHDR hdr);

/// Exposure scale by 2^ev, clip to [0,1], camera curve, round-half-up
/// quantization to 2^bits - 1 levels. Values are returned on [0,1].
std::vector<double> synth_levels(const ImageHDR& hdr, const SynthSpec& spec);

/// synth_levels stored as 8-bit codes (round-half-up of level * 255).
ImageLDR synth_ldr(const ImageHDR& hdr, const SynthSpec& spec);

struct ImagePair {
  ImageLDR ldr;
  ImageHDR hdr;
  std::string id;
};

struct CropWindow {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct AugmentOptions {
  bool crop = true;
  /// Smallest crop side as a fraction of the source side.
  double min_crop_fraction = 0.5;
};

/// Random crop window at least out_width x out_height; the full image when
/// cropping is disabled.
CropWindow random_crop(int width, int height, int out_width, int out_height, std::uint64_t seed,
                       const AugmentOptions& options = {});

/// Bilinear resample of a window (half-pixel centres, edge clamped).
ImageHDR resize_hdr(const ImageHDR& image, const CropWindow& window, int out_width,
                    int out_height);
ImageLDR resize_ldr(const ImageLDR& image, const CropWindow& window, int out_width,
                    int out_height);

/// Same random crop and resize on both images of a pair.
ImagePair augment_pair(const ImagePair& pair, int out_width, int out_height, std::uint64_t seed,
                       const AugmentOptions& options = {});

/// Smooth sky, textured surfaces and a few small bright sources, so a
/// typical exposure both clips highlights and crushes shadows. Raw radiance.
ImageHDR synthetic_scene(int width, int height, std::uint64_t seed);

// ------------------------------------------------------------ datasets

struct PairDescriptor {
  std::string stem;
  std::filesystem::path ldr_path;
  std::filesystem::path hdr_path;
};

struct ScanResult {
  std::vector<PairDescriptor> pairs;  // sorted by stem
  std::vector<std::string> warnings;  // orphans and ignored files
};

/// Pairs root/ldr/<stem>.ppm with root/hdr/<stem>.pfm|.hdr.
ScanResult dataset_scan(const std::filesystem::path& root);

/// Reads both files; the HDR side is normalized to a maximum of 1.
ImagePair load_pair(const PairDescriptor& descriptor);

struct LoadResult {
  std::vector<ImagePair> pairs;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;  // unreadable items, skipped
};

LoadResult load_dataset(const std::filesystem::path& root);

struct SynthOptions {
  int out_width = 128;
  int out_height = 64;
  double ev_min = -3.0;
  double ev_max = 3.0;
  std::vector<CameraCurve> curves = default_curves();
  int specs_per_source = 3;
  std::uint64_t seed = 0;
  AugmentOptions augment;
};

struct ManifestEntry {
  std::string stem;
  int width = 0;
  int height = 0;
  double norm_scale = 1.0;
  double exposure_ev = 0.0;
  std::string curve;
};

struct SynthReport {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;
};

/// Builds a paired dataset under out_root from every .pfm/.hdr file in
/// source_dir and writes out_root/manifest.csv.
SynthReport synthesize_dataset(const std::filesystem::path& source_dir,
                               const std::filesystem::path& out_root, const SynthOptions& options);

std::string manifest_csv(const std::vector<ManifestEntry>& entries);

// ------------------------------------------------------------ tensors

template <typename T>
Tensor<T> ldr_to_tensor(const std::vector<const ImageLDR*>& images);
template <typename T>
Tensor<T> hdr_to_tensor(const std::vector<const ImageHDR*>& images);
/// Image `index` of an N x 3 x H x W tensor; negative values are clamped to 0.
template <typename T>
ImageHDR tensor_to_hdr(const Tensor<T>& tensor, int index);

template <typename T>
struct Batch {
  Tensor<T> ldr;  // N x 3 x H x W in [0,1]
  Tensor<T> hdr;  // N x 3 x H x W in [0,1]
  std::vector<std::string> ids;
};

/// Seeded permutation of [0, count) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t shuffle_seed, int epoch);

/// Batches of one epoch in the seeded order; the last batch may be partial.
template <typename T>
class BatchIterator {
 public:
  BatchIterator(const std::vector<ImagePair>& pairs, int batch_size, std::uint64_t shuffle_seed,
                int epoch = 0);

  std::optional<Batch<T>> next();
  void skip(std::size_t batches) { cursor_ = std::min(order_.size(), cursor_ + batches * batch_); }
  [[nodiscard]] std::size_t batch_count() const { return (order_.size() + batch_ - 1) / batch_; }

 private:
  const std::vector<ImagePair>* pairs_;
  std::size_t batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

extern template class BatchIterator<float>;
extern template class BatchIterator<double>;

}  // namespace fhdr
