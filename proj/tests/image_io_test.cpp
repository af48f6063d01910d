// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "fhdr/image_io.hpp"
#include "malformed_corpus.hpp"

namespace fhdr {
namespace {

ImageHDR random_hdr(std::mt19937_64& rng, int max_side = 9) {
  std::uniform_int_distribution<int> side(1, max_side);
  ImageHDR img(side(rng), side(rng));
  std::uniform_real_distribution<float> mant(0.0f, 1.0f);
  std::uniform_int_distribution<int> expo(-20, 20);
  for (auto& v : img.pixels) v = std::ldexp(mant(rng), expo(rng));
  return img;
}

ImageLDR random_ldr(std::mt19937_64& rng, int max_side = 9) {
  std::uniform_int_distribution<int> side(1, max_side);
  ImageLDR img(side(rng), side(rng));
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(byte(rng));
  return img;
}

bool bit_equal(const ImageHDR& a, const ImageHDR& b) {
  return a.width == b.width && a.height == b.height && a.pixels.size() == b.pixels.size() &&
         std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)) == 0;
}

TEST(Pfm, RandomRoundTripsAreBitExact) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto img = random_hdr(rng);
    ASSERT_TRUE(bit_equal(read_pfm(write_pfm(img)), img)) << "image " << i;
  }
}

TEST(Pfm, SinglePixel) {
  ImageHDR img(1, 1);
  img.pixels = {0.5f, 1.0f, 2.0f};
  const auto bytes = write_pfm(img);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 3), "PF\n");
  EXPECT_TRUE(bit_equal(read_pfm(bytes), img));
}

TEST(Pfm, BottomUpScanlines) {
  ImageHDR img(1, 2);
  img.pixels = {1.0f, 1.0f, 1.0f, 2.0f, 2.0f, 2.0f};  // top row 1, bottom row 2
  const auto bytes = write_pfm(img);
  const std::size_t header = bytes.size() - 24;
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + header, 4);
  EXPECT_EQ(first, 2.0f);
}

TEST(Pfm, PositiveScaleMeansBigEndian) {
  std::string head = "PF\n1 1\n1.0\n";
  Bytes b(head.begin(), head.end());
  for (float v : {0.25f, 1.5f, 3.0f}) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int k = 3; k >= 0; --k) b.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  const auto img = read_pfm(b);
  EXPECT_EQ(img.pixels, (std::vector<float>{0.25f, 1.5f, 3.0f}));
}

TEST(Pfm, GreyscaleReplicatesChannel) {
  std::string head = "Pf\n2 1\n-1.0\n";
  Bytes b(head.begin(), head.end());
  for (float v : {0.5f, 4.0f}) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
  }
  const auto img = read_pfm(b);
  EXPECT_EQ(img.pixels, (std::vector<float>{0.5f, 0.5f, 0.5f, 4.0f, 4.0f, 4.0f}));
}

TEST(Pfm, EveryTruncationIsAParseError) {
  std::mt19937_64 rng(2);
  const auto bytes = write_pfm(random_hdr(rng));
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW((void)read_pfm(std::span(bytes.data(), n)), ParseError) << n;
  }
}

TEST(Rgbe, ZeroPixel) {
  const auto p = float_to_rgbe(0.0f, 0.0f, 0.0f);
  EXPECT_EQ(p, (std::array<std::uint8_t, 4>{0, 0, 0, 0}));
  const auto back = rgbe_to_float(std::span<const std::uint8_t, 4>(p));
  EXPECT_EQ(back, (std::array<float, 3>{0.0f, 0.0f, 0.0f}));
}

TEST(Rgbe, ExamplePixel) {
  const auto p = float_to_rgbe(1.0f, 0.5f, 0.25f);
  const auto back = rgbe_to_float(std::span<const std::uint8_t, 4>(p));
  const float in[3] = {1.0f, 0.5f, 0.25f};
  for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(back[c] - in[c]) / in[c], 1.0 / 128);
}

// Shared-exponent error, measured against the pixel's largest channel.
TEST(Rgbe, RandomRoundTripWithinQuantization) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto img = random_hdr(rng, 12);
    const auto back = read_rgbe(write_rgbe(img));
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    for (std::size_t p = 0; p < img.pixels.size(); p += 3) {
      const float mx = std::max({img.pixels[p], img.pixels[p + 1], img.pixels[p + 2]});
      if (!(mx > 1e-30f)) continue;
      for (int c = 0; c < 3; ++c) {
        ASSERT_LE(std::abs(back.pixels[p + c] - img.pixels[p + c]) / mx, 1.0 / 128)
            << "image " << i << " sample " << p + c;
      }
    }
  }
}

TEST(Rgbe, RleAndFlatDecodeIdentically) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    ImageHDR img(8 + i, 3);
    std::uniform_real_distribution<float> u(0.0f, 4.0f);
    // long runs exercise the run path, noise the literal path
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        img.at(x, 0, c) = 1.0f;
        img.at(x, 1, c) = u(rng);
        img.at(x, 2, c) = x < img.width / 2 ? 0.5f : u(rng);
      }
    const auto rle = write_rgbe(img, RgbeEncoding::rle);
    const auto flat = write_rgbe(img, RgbeEncoding::flat);
    EXPECT_NE(rle, flat);
    EXPECT_TRUE(bit_equal(read_rgbe(rle), read_rgbe(flat))) << i;
  }
}

TEST(Rgbe, AcceptsRgbeSignature) {
  ImageHDR img(2, 1);
  img.pixels = {1.0f, 1.0f, 1.0f, 0.5f, 0.5f, 0.5f};
  auto bytes = write_rgbe(img);
  std::string s(bytes.begin(), bytes.end());
  s.replace(0, 10, "#?RGBE");
  const auto back = read_rgbe(Bytes(s.begin(), s.end()));
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Ppm, RandomRoundTripsAreBitExact) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto img = random_ldr(rng);
    const auto back = read_ppm(write_ppm(img));
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    ASSERT_EQ(back.pixels, img.pixels) << "image " << i;
  }
}

TEST(Ppm, Checkerboard) {
  ImageLDR img(2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = (x + y) % 2 ? 255 : 0;
  EXPECT_EQ(read_ppm(write_ppm(img)).pixels, img.pixels);
}

TEST(Ppm, CommentsAreSkipped) {
  std::string s = "P6\n# made by hand\n2 1 # trailing\n# another\n255\n";
  Bytes b(s.begin(), s.end());
  for (int i = 0; i < 6; ++i) b.push_back(static_cast<std::uint8_t>(10 * i));
  const auto img = read_ppm(b);
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 1);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 10, 20, 30, 40, 50}));
}

TEST(Ppm, MaxvalOtherThan255IsUnsupported) {
  std::string s = "P6\n1 1\n15\n";
  Bytes b(s.begin(), s.end());
  b.insert(b.end(), {1, 2, 3});
  EXPECT_THROW((void)read_ppm(b), UnsupportedFormatError);
}

TEST(Ppm, PayloadLengthEnforced) {
  std::string s = "P6\n2 2\n255\n";
  Bytes b(s.begin(), s.end());
  b.resize(b.size() + 11);
  EXPECT_THROW((void)read_ppm(b), ParseError);
}

TEST(MalformedCorpus, EveryFixtureIsRejected) {
  const auto corpus = testing::malformed_corpus();
  EXPECT_EQ(corpus.size(), 20u);
  for (const auto& f : corpus) {
    try {
      testing::decode(f);
      ADD_FAILURE() << f.name << " decoded without error";
    } catch (const FormatError& e) {
      EXPECT_LE(e.offset(), f.bytes.size()) << f.name;
    }
  }
}

TEST(Files, ExtensionPicksCodec) {
  const auto dir = std::filesystem::temp_directory_path() / "fhdr_image_io_test";
  std::filesystem::create_directories(dir);
  ImageHDR img(3, 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = 0.25f * i;
  save_hdr(dir / "a.pfm", img);
  save_hdr(dir / "a.hdr", img);
  EXPECT_TRUE(bit_equal(load_hdr(dir / "a.pfm"), img));
  EXPECT_EQ(read_file(dir / "a.hdr").front(), '#');
  EXPECT_THROW(save_hdr(dir / "a.exr", img), std::invalid_argument);
  EXPECT_TRUE(is_hdr_extension("x.HDR") || is_hdr_extension("x.hdr"));
  EXPECT_FALSE(is_hdr_extension("x.ppm"));
  EXPECT_THROW((void)load_hdr(dir / "missing.pfm"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fhdr
