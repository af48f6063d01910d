// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string_view>

namespace fhdr {

FormatError::FormatError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

ImageHDR::ImageHDR(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("ImageHDR: dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h * 3, 0.0f);
}

void ImageHDR::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("ImageHDR: empty image");
  if (pixels.size() != static_cast<std::size_t>(width) * height * 3) {
    throw std::invalid_argument("ImageHDR: pixel buffer does not match dimensions");
  }
  if (!(norm_scale > 0.0)) throw std::invalid_argument("ImageHDR: norm_scale must be positive");
  for (float v : pixels) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw std::invalid_argument("ImageHDR: pixels must be finite and nonnegative");
    }
  }
}

ImageLDR::ImageLDR(int w, int h) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("ImageLDR: dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

namespace {

// Dimension cap shared by all readers; keeps width*height*channels in range.
constexpr long kMaxDimension = 1 << 15;

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  [[nodiscard]] std::size_t offset() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }
  [[nodiscard]] bool at_end() const { return pos_ >= bytes_.size(); }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  std::uint8_t peek() const {
    if (at_end()) fail("unexpected end of file");
    return bytes_[pos_];
  }
  std::uint8_t get() {
    const std::uint8_t b = peek();
    ++pos_;
    return b;
  }

  void expect(std::string_view literal) {
    for (char ch : literal) {
      if (at_end() || bytes_[pos_] != static_cast<std::uint8_t>(ch)) {
        fail("expected \"" + std::string(literal) + "\"");
      }
      ++pos_;
    }
  }

  void skip_space(bool comments) {
    while (!at_end()) {
      const auto ch = bytes_[pos_];
      if (std::isspace(ch)) {
        ++pos_;
      } else if (comments && ch == '#') {
        while (!at_end() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  /// Exactly one whitespace byte, as between a netpbm-style header and payload.
  void single_space() {
    if (at_end() || !std::isspace(bytes_[pos_])) fail("expected whitespace before payload");
    ++pos_;
  }

  std::string token() {
    const std::size_t start = pos_;
    while (!at_end() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) fail("expected a token");
    return std::string(reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start);
  }

  long integer(long lo, long hi, const char* what) {
    const std::size_t start = pos_;
    const std::string t = token();
    long value = 0;
    const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || end != t.data() + t.size()) {
      throw ParseError(std::string("malformed ") + what + " \"" + t + "\"", start);
    }
    if (value < lo || value > hi) {
      throw ParseError(std::string(what) + " " + t + " out of range", start);
    }
    return value;
  }

  std::string line() {
    const std::size_t start = pos_;
    while (!at_end() && bytes_[pos_] != '\n') ++pos_;
    if (at_end()) throw ParseError("unterminated header line", start);
    std::string out(reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start);
    ++pos_;
    return out;
  }

  std::span<const std::uint8_t> take(std::size_t count, const char* what) {
    if (remaining() < count) {
      fail(std::string("truncated ") + what + ": need " + std::to_string(count) +
           " bytes, have " + std::to_string(remaining()));
    }
    auto out = bytes_.subspan(pos_, count);
    pos_ += count;
    return out;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t load_u32(const std::uint8_t* p, bool little) {
  return little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
                   std::uint32_t{p[3]} << 24)
                : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 |
                   std::uint32_t{p[0]} << 24);
}

void append(Bytes& out, std::string_view text) { out.insert(out.end(), text.begin(), text.end()); }

}  // namespace

// ---------------------------------------------------------------- PFM

ImageHDR read_pfm(std::span<const std::uint8_t> bytes) {
  Cursor in(bytes);
  in.expect("P");
  const std::uint8_t kind = in.get();
  if (kind != 'F' && kind != 'f') in.fail("not a PFM file (expected PF or Pf)");
  const int channels = kind == 'F' ? 3 : 1;
  in.skip_space(false);
  const auto width = static_cast<int>(in.integer(1, kMaxDimension, "width"));
  in.skip_space(false);
  const auto height = static_cast<int>(in.integer(1, kMaxDimension, "height"));
  in.skip_space(false);
  const std::size_t scale_at = in.offset();
  const std::string scale_token = in.token();
  double scale = 0.0;
  {
    std::istringstream ss(scale_token);
    ss.imbue(std::locale::classic());
    if (!(ss >> scale) || !ss.eof() || scale == 0.0 || !std::isfinite(scale)) {
      throw ParseError("malformed PFM scale \"" + scale_token + "\"", scale_at);
    }
  }
  in.single_space();
  const bool little = scale < 0.0;
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  const std::size_t payload_at = in.offset();
  const auto payload = in.take(count * 4, "PFM payload");

  ImageHDR image(width, height);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;  // PFM stores the bottom scanline first
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t idx =
            (static_cast<std::size_t>(row) * width + x) * channels + (channels == 3 ? c : 0);
        const float v = std::bit_cast<float>(load_u32(payload.data() + idx * 4, little));
        if (!std::isfinite(v) || v < 0.0f) {
          throw ParseError("PFM sample is negative or not finite", payload_at + idx * 4);
        }
        image.at(x, y, c) = v;
      }
    }
  }
  return image;
}

Bytes write_pfm(const ImageHDR& image) {
  image.validate();
  Bytes out;
  append(out, "PF\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                  "\n-1.0\n");
  out.reserve(out.size() + image.pixels.size() * 4);
  for (int row = 0; row < image.height; ++row) {
    const int y = image.height - 1 - row;
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const auto bits = std::bit_cast<std::uint32_t>(image.at(x, y, c));
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- RGBE

std::array<std::uint8_t, 4> float_to_rgbe(float r, float g, float b) {
  const float v = std::max({r, g, b});
  if (!(v > 1e-32f)) return {0, 0, 0, 0};
  int e = 0;
  const float m = std::frexp(v, &e);
  if (e > 127) return {255, 255, 255, 255};
  if (e < -128) return {0, 0, 0, 0};
  const float k = m * 256.0f / v;
  auto q = [k](float c) {
    return static_cast<std::uint8_t>(std::clamp(c * k, 0.0f, 255.0f));
  };
  return {q(r), q(g), q(b), static_cast<std::uint8_t>(e + 128)};
}

std::array<float, 3> rgbe_to_float(std::span<const std::uint8_t, 4> rgbe) {
  if (rgbe[3] == 0) return {0.0f, 0.0f, 0.0f};
  const float f = std::ldexp(1.0f, static_cast<int>(rgbe[3]) - (128 + 8));
  return {rgbe[0] * f, rgbe[1] * f, rgbe[2] * f};
}

namespace {

bool rle_allowed(int width) { return width >= 8 && width < 32768; }

void read_rgbe_scanline(Cursor& in, int width, std::uint8_t* line) {
  const std::size_t flat_bytes = static_cast<std::size_t>(width) * 4;
  if (!rle_allowed(width)) {
    const auto all = in.take(flat_bytes, "flat scanline");
    std::memcpy(line, all.data(), all.size());
    return;
  }
  const auto head = in.take(4, "scanline header");
  const bool marked = head[0] == 2 && head[1] == 2 && (head[2] & 0x80) == 0;
  if (!marked) {
    // Not run-length encoded: the probed bytes are the first pixel.
    std::memcpy(line, head.data(), 4);
    const auto rest = in.take(flat_bytes - 4, "flat scanline");
    std::memcpy(line + 4, rest.data(), rest.size());
    return;
  }
  if (((head[2] << 8) | head[3]) != width) {
    throw ParseError("RLE scanline width mismatch", in.offset() - 4);
  }

  for (int c = 0; c < 4; ++c) {
    int x = 0;
    while (x < width) {
      const std::size_t at = in.offset();
      int count = in.get();
      if (count > 128) {
        count -= 128;
        if (x + count > width) throw ParseError("RLE run overflows scanline", at);
        const std::uint8_t value = in.get();
        for (int i = 0; i < count; ++i) line[(x++) * 4 + c] = value;
      } else {
        if (count == 0 || x + count > width) throw ParseError("bad RLE literal count", at);
        const auto lit = in.take(static_cast<std::size_t>(count), "RLE literal");
        for (int i = 0; i < count; ++i) line[(x++) * 4 + c] = lit[i];
      }
    }
  }
}

void write_rle_channel(Bytes& out, const std::uint8_t* data, int width) {
  constexpr int kMinRun = 4;
  int i = 0;
  while (i < width) {
    int run_start = i;
    int run_len = 0;
    while (run_start < width) {
      run_len = 1;
      while (run_start + run_len < width && run_len < 127 &&
             data[(run_start + run_len) * 4] == data[run_start * 4]) {
        ++run_len;
      }
      if (run_len >= kMinRun) break;
      run_start += run_len;
    }
    while (i < run_start) {
      const int n = std::min(128, run_start - i);
      out.push_back(static_cast<std::uint8_t>(n));
      for (int k = 0; k < n; ++k) out.push_back(data[(i + k) * 4]);
      i += n;
    }
    if (run_start < width) {
      out.push_back(static_cast<std::uint8_t>(128 + run_len));
      out.push_back(data[run_start * 4]);
      i = run_start + run_len;
    }
  }
}

}  // namespace

ImageHDR read_rgbe(std::span<const std::uint8_t> bytes) {
  Cursor in(bytes);
  const std::string magic = in.line();
  if (magic.rfind("#?RADIANCE", 0) != 0 && magic.rfind("#?RGBE", 0) != 0) {
    throw ParseError("missing #?RADIANCE or #?RGBE signature", 0);
  }
  for (;;) {
    const std::size_t at = in.offset();
    const std::string line = in.line();
    if (line.empty()) break;
    if (line.rfind("FORMAT=", 0) == 0 && line != "FORMAT=32-bit_rle_rgbe") {
      throw UnsupportedFormatError("unsupported RGBE pixel format \"" + line.substr(7) + "\"",
                                   at);
    }
  }
  const std::size_t res_at = in.offset();
  const std::string res = in.line();
  std::istringstream rs(res);
  std::string ylabel, xlabel;
  long height = 0;
  long width = 0;
  if (!(rs >> ylabel >> height >> xlabel >> width)) {
    throw ParseError("malformed resolution line \"" + res + "\"", res_at);
  }
  if (ylabel != "-Y" || xlabel != "+X") {
    throw UnsupportedFormatError("unsupported scanline orientation \"" + res + "\"", res_at);
  }
  if (width < 1 || height < 1 || width > kMaxDimension || height > kMaxDimension) {
    throw ParseError("image dimensions out of range", res_at);
  }
  // Smallest possible payload, checked before allocating.
  const std::size_t min_line = rle_allowed(static_cast<int>(width))
                                   ? 4 + 8 * static_cast<std::size_t>((width + 126) / 127)
                                   : static_cast<std::size_t>(width) * 4;
  if (in.remaining() < std::min(min_line, static_cast<std::size_t>(width) * 4) *
                           static_cast<std::size_t>(height)) {
    in.fail("truncated RGBE payload");
  }

  ImageHDR image(static_cast<int>(width), static_cast<int>(height));
  std::vector<std::uint8_t> line(static_cast<std::size_t>(width) * 4);
  for (int y = 0; y < image.height; ++y) {
    read_rgbe_scanline(in, image.width, line.data());
    for (int x = 0; x < image.width; ++x) {
      const auto rgb = rgbe_to_float(std::span<const std::uint8_t, 4>(line.data() + x * 4, 4));
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = rgb[c];
    }
  }
  return image;
}

Bytes write_rgbe(const ImageHDR& image, RgbeEncoding encoding) {
  image.validate();
  Bytes out;
  append(out, "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " + std::to_string(image.height) +
                  " +X " + std::to_string(image.width) + "\n");
  const bool rle = encoding == RgbeEncoding::rle && rle_allowed(image.width);
  std::vector<std::uint8_t> line(static_cast<std::size_t>(image.width) * 4);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto p = float_to_rgbe(image.at(x, y, 0), image.at(x, y, 1), image.at(x, y, 2));
      std::copy(p.begin(), p.end(), line.begin() + x * 4);
    }
    if (!rle) {
      out.insert(out.end(), line.begin(), line.end());
      continue;
    }
    out.push_back(2);
    out.push_back(2);
    out.push_back(static_cast<std::uint8_t>(image.width >> 8));
    out.push_back(static_cast<std::uint8_t>(image.width & 0xff));
    for (int c = 0; c < 4; ++c) write_rle_channel(out, line.data() + c, image.width);
  }
  return out;
}

// ---------------------------------------------------------------- PPM

ImageLDR read_ppm(std::span<const std::uint8_t> bytes) {
  Cursor in(bytes);
  in.expect("P6");
  in.skip_space(true);
  const auto width = static_cast<int>(in.integer(1, kMaxDimension, "width"));
  in.skip_space(true);
  const auto height = static_cast<int>(in.integer(1, kMaxDimension, "height"));
  in.skip_space(true);
  const std::size_t maxval_at = in.offset();
  const long maxval = in.integer(1, 65535, "maxval");
  if (maxval != 255) {
    throw UnsupportedFormatError("PPM maxval " + std::to_string(maxval) + " unsupported (need 255)",
                                 maxval_at);
  }
  in.single_space();
  const auto payload =
      in.take(static_cast<std::size_t>(width) * height * 3, "PPM payload");
  ImageLDR image(width, height);
  std::copy(payload.begin(), payload.end(), image.pixels.begin());
  return image;
}

Bytes write_ppm(const ImageLDR& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw std::invalid_argument("write_ppm: pixel buffer does not match dimensions");
  }
  Bytes out;
  append(out, "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                  "\n255\n");
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

// ---------------------------------------------------------------- files

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error("read failed for " + path.string());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

bool is_hdr_extension(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".pfm" || ext == ".hdr";
}

ImageHDR load_hdr(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  const Bytes bytes = read_file(path);
  if (ext == ".pfm") return read_pfm(bytes);
  if (ext == ".hdr") return read_rgbe(bytes);
  throw std::invalid_argument("unknown HDR extension: " + path.string());
}

void save_hdr(const std::filesystem::path& path, const ImageHDR& image) {
  const std::string ext = lower_extension(path);
  if (ext == ".pfm") return write_file(path, write_pfm(image));
  if (ext == ".hdr") return write_file(path, write_rgbe(image));
  throw std::invalid_argument("unknown HDR extension: " + path.string());
}

ImageLDR load_ldr(const std::filesystem::path& path) {
  if (lower_extension(path) != ".ppm") {
    throw std::invalid_argument("LDR images must be .ppm: " + path.string());
  }
  return read_ppm(read_file(path));
}

void save_ldr(const std::filesystem::path& path, const ImageLDR& image) {
  write_file(path, write_ppm(image));
}

}  // namespace fhdr
