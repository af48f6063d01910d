// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

// Codecs for PFM and Radiance RGBE (HDR) and binary PPM (LDR). All readers
// work on an in-memory byte buffer and report malformed input as exceptions
// carrying the byte offset; they never read past the buffer.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fhdr {

using Bytes = std::vector<std::uint8_t>;

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset);
  [[nodiscard]] std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ParseError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedFormatError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Linear RGB radiance, interleaved, rows top to bottom.
struct ImageHDR {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;
  /// Division applied to reach the stored values; 1 for raw radiance.
  double norm_scale = 1.0;

  ImageHDR() = default;
  /// Zero image. Throws std::invalid_argument on non-positive dimensions.
  ImageHDR(int width, int height);

  [[nodiscard]] float& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  [[nodiscard]] float at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  /// Throws std::invalid_argument if the invariants are broken.
  void validate() const;
};

/// 8-bit RGB, interleaved, rows top to bottom.
struct ImageLDR {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ImageLDR() = default;
  ImageLDR(int width, int height);

  [[nodiscard]] std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  [[nodiscard]] std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

ImageHDR read_pfm(std::span<const std::uint8_t> bytes);
/// Little-endian payload (negative scale token), bottom-up scanlines.
Bytes write_pfm(const ImageHDR& image);

enum class RgbeEncoding { rle, flat };

/// Accepts "#?RADIANCE" / "#?RGBE" files with flat or new-style RLE scanlines
/// in the standard "-Y H +X W" orientation.
ImageHDR read_rgbe(std::span<const std::uint8_t> bytes);
/// RLE is used where the format allows it (8 <= width < 32768).
Bytes write_rgbe(const ImageHDR& image, RgbeEncoding encoding = RgbeEncoding::rle);

/// Shared-exponent packing of one pixel, and its inverse.
std::array<std::uint8_t, 4> float_to_rgbe(float r, float g, float b);
std::array<float, 3> rgbe_to_float(std::span<const std::uint8_t, 4> rgbe);

ImageLDR read_ppm(std::span<const std::uint8_t> bytes);
Bytes write_ppm(const ImageLDR& image);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Picks the HDR codec from the extension (.pfm or .hdr).
ImageHDR load_hdr(const std::filesystem::path& path);
void save_hdr(const std::filesystem::path& path, const ImageHDR& image);
ImageLDR load_ldr(const std::filesystem::path& path);
void save_ldr(const std::filesystem::path& path, const ImageLDR& image);

[[nodiscard]] bool is_hdr_extension(const std::filesystem::path& path);

}  // namespace fhdr
