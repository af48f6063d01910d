// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

namespace fhdr {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over seed and salt
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ------------------------------------------------------------ curves

namespace {

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::uint8_t quantize8(double v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

}  // namespace

CameraCurve CameraCurve::make_gamma(double exponent) {
  CameraCurve c;
  c.kind = Kind::gamma;
  c.gamma = exponent;
  c.validate();
  return c;
}

CameraCurve CameraCurve::make_sigmoid(double slope, double midpoint) {
  CameraCurve c;
  c.kind = Kind::sigmoid;
  c.slope = slope;
  c.midpoint = midpoint;
  c.validate();
  return c;
}

void CameraCurve::validate() const {
  if (kind == Kind::gamma && !(gamma > 0.0)) {
    throw ContractError("camera curve: gamma exponent must be positive");
  }
  if (kind == Kind::sigmoid && (!(slope > 0.0) || !(midpoint > 0.0 && midpoint < 1.0))) {
    throw ContractError("camera curve: sigmoid needs slope > 0 and midpoint in (0,1)");
  }
}

double CameraCurve::apply(double x) const {
  x = std::clamp(x, 0.0, 1.0);
  if (kind == Kind::gamma) return std::pow(x, gamma);
  const double lo = logistic(-slope * midpoint);
  const double hi = logistic(slope * (1.0 - midpoint));
  return std::clamp((logistic(slope * (x - midpoint)) - lo) / (hi - lo), 0.0, 1.0);
}

double CameraCurve::inverse(double y) const {
  y = std::clamp(y, 0.0, 1.0);
  if (kind == Kind::gamma) return std::pow(y, 1.0 / gamma);
  const double lo = logistic(-slope * midpoint);
  const double hi = logistic(slope * (1.0 - midpoint));
  const double s = lo + y * (hi - lo);
  return std::clamp(midpoint + std::log(s / (1.0 - s)) / slope, 0.0, 1.0);
}

std::string CameraCurve::descriptor() const {
  if (kind == Kind::gamma) return "gamma:" + number(gamma);
  return "sigmoid:" + number(slope) + ":" + number(midpoint);
}

CameraCurve CameraCurve::parse(std::string_view text) {
  std::vector<double> values;
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  while (!rest.empty()) {
    const auto next = rest.find(':');
    const std::string part(rest.substr(0, next));
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ContractError("camera curve: bad number \"" + part + "\" in \"" + std::string(text) +
                          "\"");
    }
    rest = next == std::string_view::npos ? std::string_view{} : rest.substr(next + 1);
  }
  if (kind == "gamma" && values.size() == 1) return make_gamma(values[0]);
  if (kind == "sigmoid" && values.size() == 1) return make_sigmoid(values[0]);
  if (kind == "sigmoid" && values.size() == 2) return make_sigmoid(values[0], values[1]);
  throw ContractError("camera curve: unrecognized descriptor \"" + std::string(text) + "\"");
}

std::vector<CameraCurve> default_curves() {
  return {CameraCurve::make_gamma(1.0 / 1.8), CameraCurve::make_gamma(1.0 / 2.0),
          CameraCurve::make_gamma(1.0 / 2.2), CameraCurve::make_gamma(1.0 / 2.4),
          CameraCurve::make_sigmoid(4.0),     CameraCurve::make_sigmoid(6.0),
          CameraCurve::make_sigmoid(8.0)};
}

void SynthSpec::validate() const {
  curve.validate();
  if (quantize_bits < 1 || quantize_bits > 16) {
    throw ContractError("synth spec: quantize_bits must be in [1,16], got " +
                        std::to_string(quantize_bits));
  }
  if (!std::isfinite(exposure_ev)) throw ContractError("synth spec: exposure_ev must be finite");
}

// ------------------------------------------------------------ synthesis

ImageHDR normalize_hdr(ImageHDR hdr) {
  hdr.validate();
  const float peak = *std::max_element(hdr.pixels.begin(), hdr.pixels.end());
  if (peak <= 0.0f) return hdr;
  for (float& v : hdr.pixels) v = std::min(v / peak, 1.0f);
  hdr.norm_scale *= peak;
  return hdr;
}

std::vector<double> synth_levels(const ImageHDR& hdr, const SynthSpec& spec) {
  spec.validate();
  hdr.validate();
  const double gain = std::exp2(spec.exposure_ev);
  const double levels = std::exp2(spec.quantize_bits) - 1.0;
  std::vector<double> out(hdr.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double exposed = std::clamp(static_cast<double>(hdr.pixels[i]) * gain, 0.0, 1.0);
    out[i] = std::floor(spec.curve.apply(exposed) * levels + 0.5) / levels;
  }
  return out;
}

ImageLDR synth_ldr(const ImageHDR& hdr, const SynthSpec& spec) {
  const auto levels = synth_levels(hdr, spec);
  ImageLDR ldr(hdr.width, hdr.height);
  std::transform(levels.begin(), levels.end(), ldr.pixels.begin(), quantize8);
  return ldr;
}

// ------------------------------------------------------------ augmentation

CropWindow random_crop(int width, int height, int out_width, int out_height, std::uint64_t seed,
                       const AugmentOptions& options) {
  if (width < out_width || height < out_height || out_width < 1 || out_height < 1) {
    throw ContractError("augment: source " + std::to_string(width) + "x" +
                        std::to_string(height) + " is smaller than the output " +
                        std::to_string(out_width) + "x" + std::to_string(out_height));
  }
  if (!options.crop) return CropWindow{0, 0, width, height};
  if (!(options.min_crop_fraction > 0.0 && options.min_crop_fraction <= 1.0)) {
    throw ContractError("augment: min_crop_fraction must be in (0,1]");
  }
  std::mt19937_64 rng(seed);
  const double f = options.min_crop_fraction + (1.0 - options.min_crop_fraction) * uniform01(rng);
  CropWindow w;
  w.width = std::clamp(static_cast<int>(std::lround(f * width)), out_width, width);
  w.height = std::clamp(static_cast<int>(std::lround(f * height)), out_height, height);
  w.x = static_cast<int>(rng() % static_cast<std::uint64_t>(width - w.width + 1));
  w.y = static_cast<int>(rng() % static_cast<std::uint64_t>(height - w.height + 1));
  return w;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int start, int extent, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double step = static_cast<double>(extent) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::clamp((o + 0.5) * step - 0.5, 0.0, extent - 1.0);
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, extent - 1);
    taps[o] = Tap{start + i0, start + i1, src - i0};
  }
  return taps;
}

void check_window(const CropWindow& w, int width, int height) {
  if (w.x < 0 || w.y < 0 || w.width < 1 || w.height < 1 || w.x + w.width > width ||
      w.y + w.height > height) {
    throw ContractError("resize: crop window outside the image");
  }
}

template <typename Sample>
std::vector<double> resample(const CropWindow& window, int out_width, int out_height,
                             Sample&& sample) {
  const auto tx = bilinear_taps(window.x, window.width, out_width);
  const auto ty = bilinear_taps(window.y, window.height, out_height);
  std::vector<double> out(static_cast<std::size_t>(out_width) * out_height * 3);
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - tx[x].frac) * sample(tx[x].i0, ty[y].i0, c) +
                           tx[x].frac * sample(tx[x].i1, ty[y].i0, c);
        const double bottom = (1.0 - tx[x].frac) * sample(tx[x].i0, ty[y].i1, c) +
                              tx[x].frac * sample(tx[x].i1, ty[y].i1, c);
        out[(static_cast<std::size_t>(y) * out_width + x) * 3 + c] =
            (1.0 - ty[y].frac) * top + ty[y].frac * bottom;
      }
    }
  }
  return out;
}

}  // namespace

ImageHDR resize_hdr(const ImageHDR& image, const CropWindow& window, int out_width,
                    int out_height) {
  check_window(window, image.width, image.height);
  const auto values = resample(window, out_width, out_height, [&](int x, int y, int c) {
    return static_cast<double>(image.at(x, y, c));
  });
  ImageHDR out(out_width, out_height);
  out.norm_scale = image.norm_scale;
  std::transform(values.begin(), values.end(), out.pixels.begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

ImageLDR resize_ldr(const ImageLDR& image, const CropWindow& window, int out_width,
                    int out_height) {
  check_window(window, image.width, image.height);
  const auto values = resample(window, out_width, out_height, [&](int x, int y, int c) {
    return image.at(x, y, c) / 255.0;
  });
  ImageLDR out(out_width, out_height);
  std::transform(values.begin(), values.end(), out.pixels.begin(), quantize8);
  return out;
}

ImagePair augment_pair(const ImagePair& pair, int out_width, int out_height, std::uint64_t seed,
                       const AugmentOptions& options) {
  if (pair.ldr.width != pair.hdr.width || pair.ldr.height != pair.hdr.height) {
    throw ContractError("augment: LDR and HDR dimensions differ for " + pair.id);
  }
  const CropWindow w =
      random_crop(pair.hdr.width, pair.hdr.height, out_width, out_height, seed, options);
  return ImagePair{resize_ldr(pair.ldr, w, out_width, out_height),
                   resize_hdr(pair.hdr, w, out_width, out_height), pair.id};
}

ImageHDR synthetic_scene(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  ImageHDR img(width, height);

  const double horizon = uni(0.35, 0.6) * height;
  const double sky[3] = {uni(0.5, 0.7), uni(0.7, 0.85), 1.0};
  const double ground[3] = {uni(0.5, 1.0), uni(0.4, 0.8), uni(0.2, 0.6)};
  const double fx = uni(0.15, 0.6);
  const double fy = uni(0.15, 0.6);
  const double phase = uni(0.0, 6.28);

  struct Box {
    double x0, y0, x1, y1, level;
  };
  std::vector<Box> boxes;
  for (int i = 0; i < 3; ++i) {
    const double bx = uni(0.0, width * 0.8);
    const double by = uni(horizon * 0.8, height * 0.9);
    boxes.push_back({bx, by, bx + uni(4.0, width * 0.4), by + uni(3.0, height * 0.3),
                     uni(0.002, 0.02)});
  }
  struct Light {
    double x, y, radius, peak;
  };
  std::vector<Light> lights;
  const int light_count = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < light_count; ++i) {
    lights.push_back({uni(0.0, width), uni(0.0, height), uni(0.8, 2.5), uni(8.0, 40.0)});
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double base;
      const double* tint;
      if (y < horizon) {
        base = 0.4 + 0.6 * (1.0 - y / horizon);
        tint = sky;
      } else {
        const double texture = 0.5 + 0.5 * std::sin(fx * x + phase) * std::cos(fy * y);
        base = 0.03 + 0.25 * texture;
        tint = ground;
      }
      for (const auto& b : boxes) {
        if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1) base = b.level;
      }
      double glow = 0.0;
      for (const auto& l : lights) {
        const double d2 = (x - l.x) * (x - l.x) + (y - l.y) * (y - l.y);
        glow += l.peak * std::exp(-d2 / (2.0 * l.radius * l.radius));
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(base * tint[c] + glow);
    }
  }
  return img;
}

// ------------------------------------------------------------ datasets

ScanResult dataset_scan(const fs::path& root) {
  ScanResult result;
  std::map<std::string, fs::path> ldr;
  std::map<std::string, fs::path> hdr;
  auto collect = [&](const fs::path& dir, bool want_hdr) {
    if (!fs::is_directory(dir)) return;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const fs::path& p = entry.path();
      const std::string stem = p.stem().string();
      const bool accepted = want_hdr ? is_hdr_extension(p) : p.extension() == ".ppm";
      if (!accepted) {
        result.warnings.push_back("ignored file " + p.string());
        continue;
      }
      auto& table = want_hdr ? hdr : ldr;
      if (!table.emplace(stem, p).second) {
        result.warnings.push_back("duplicate stem " + stem + " in " + dir.string());
      }
    }
  };
  collect(root / "ldr", false);
  collect(root / "hdr", true);

  std::set<std::string> stems;
  for (const auto& [s, p] : ldr) stems.insert(s);
  for (const auto& [s, p] : hdr) stems.insert(s);
  for (const auto& s : stems) {
    const auto l = ldr.find(s);
    const auto h = hdr.find(s);
    if (l == ldr.end()) {
      result.warnings.push_back("orphan HDR file " + h->second.string());
    } else if (h == hdr.end()) {
      result.warnings.push_back("orphan LDR file " + l->second.string());
    } else {
      result.pairs.push_back(PairDescriptor{s, l->second, h->second});
    }
  }
  return result;
}

ImagePair load_pair(const PairDescriptor& d) {
  ImagePair pair{load_ldr(d.ldr_path), normalize_hdr(load_hdr(d.hdr_path)), d.stem};
  if (pair.ldr.width != pair.hdr.width || pair.ldr.height != pair.hdr.height) {
    throw ContractError("pair " + d.stem + ": LDR and HDR dimensions differ");
  }
  return pair;
}

LoadResult load_dataset(const fs::path& root) {
  LoadResult result;
  ScanResult scan = dataset_scan(root);
  result.warnings = std::move(scan.warnings);
  for (const auto& d : scan.pairs) {
    try {
      result.pairs.push_back(load_pair(d));
    } catch (const std::exception& e) {
      result.errors.push_back(d.stem + ": " + e.what());
    }
  }
  return result;
}

std::string manifest_csv(const std::vector<ManifestEntry>& entries) {
  std::string out = "stem,width,height,norm_scale,exposure_ev,curve\n";
  char buf[64];
  for (const auto& e : entries) {
    out += e.stem + "," + std::to_string(e.width) + "," + std::to_string(e.height) + ",";
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,", e.norm_scale, e.exposure_ev);
    out += buf + e.curve + "\n";
  }
  return out;
}

SynthReport synthesize_dataset(const fs::path& source_dir, const fs::path& out_root,
                               const SynthOptions& options) {
  if (options.curves.empty()) throw ContractError("synth: no camera curves given");
  if (options.specs_per_source < 1) throw ContractError("synth: specs_per_source must be >= 1");
  if (!(options.ev_min <= options.ev_max)) throw ContractError("synth: ev_min exceeds ev_max");

  std::vector<fs::path> sources;
  if (fs::is_directory(source_dir)) {
    for (const auto& entry : fs::directory_iterator(source_dir)) {
      if (entry.is_regular_file() && is_hdr_extension(entry.path())) {
        sources.push_back(entry.path());
      }
    }
  }
  std::sort(sources.begin(), sources.end());

  SynthReport report;
  fs::create_directories(out_root / "ldr");
  fs::create_directories(out_root / "hdr");
  for (std::size_t s = 0; s < sources.size(); ++s) {
    ImageHDR source;
    try {
      source = load_hdr(sources[s]);
      source.validate();
    } catch (const std::exception& e) {
      report.warnings.push_back("skipped " + sources[s].string() + ": " + e.what());
      continue;
    }
    for (int k = 0; k < options.specs_per_source; ++k) {
      std::mt19937_64 rng(derive_seed(options.seed, s * 1009 + static_cast<std::uint64_t>(k)));
      SynthSpec spec;
      spec.exposure_ev = options.ev_min + (options.ev_max - options.ev_min) * uniform01(rng);
      spec.curve = options.curves[rng() % options.curves.size()];
      ImageHDR hdr;
      try {
        const CropWindow window = random_crop(source.width, source.height, options.out_width,
                                              options.out_height, rng(), options.augment);
        hdr = normalize_hdr(resize_hdr(source, window, options.out_width, options.out_height));
      } catch (const std::exception& e) {
        report.warnings.push_back("skipped " + sources[s].string() + ": " + e.what());
        break;
      }
      const ImageLDR ldr = synth_ldr(hdr, spec);
      const std::string stem = sources[s].stem().string() + "_" + std::to_string(k);
      save_ldr(out_root / "ldr" / (stem + ".ppm"), ldr);
      save_hdr(out_root / "hdr" / (stem + ".pfm"), hdr);
      report.entries.push_back(ManifestEntry{stem, hdr.width, hdr.height, hdr.norm_scale,
                                             spec.exposure_ev, spec.curve.descriptor()});
    }
  }
  const std::string csv = manifest_csv(report.entries);
  write_file(out_root / "manifest.csv",
             std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  return report;
}

// ------------------------------------------------------------ tensors

template <typename T>
Tensor<T> ldr_to_tensor(const std::vector<const ImageLDR*>& images) {
  if (images.empty()) throw ContractError("ldr_to_tensor: no images");
  const int w = images.front()->width;
  const int h = images.front()->height;
  Tensor<T> t(Shape{static_cast<int>(images.size()), 3, h, w});
  auto dst = t.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageLDR& img = *images[n];
    if (img.width != w || img.height != h) {
      throw ContractError("batch: mixed image dimensions in one batch");
    }
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) {
        dst[(n * 3 + c) * plane + p] = static_cast<T>(img.pixels[p * 3 + c]) / T(255);
      }
    }
  }
  return t;
}

template <typename T>
Tensor<T> hdr_to_tensor(const std::vector<const ImageHDR*>& images) {
  if (images.empty()) throw ContractError("hdr_to_tensor: no images");
  const int w = images.front()->width;
  const int h = images.front()->height;
  Tensor<T> t(Shape{static_cast<int>(images.size()), 3, h, w});
  auto dst = t.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageHDR& img = *images[n];
    if (img.width != w || img.height != h) {
      throw ContractError("batch: mixed image dimensions in one batch");
    }
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < 3; ++c) dst[(n * 3 + c) * plane + p] = static_cast<T>(img.pixels[p * 3 + c]);
    }
  }
  return t;
}

template <typename T>
ImageHDR tensor_to_hdr(const Tensor<T>& tensor, int index) {
  const Shape s = tensor.shape();
  if (s.c != 3 || index < 0 || index >= s.n) {
    throw ContractError("tensor_to_hdr: need image index < N of an Nx3xHxW tensor, got " + s.str());
  }
  ImageHDR img(s.w, s.h);
  const auto src = tensor.data();
  const std::size_t plane = s.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) {
      const double v = src[(static_cast<std::size_t>(index) * 3 + c) * plane + p];
      img.pixels[p * 3 + c] = static_cast<float>(std::isfinite(v) ? std::max(v, 0.0) : 0.0);
    }
  }
  return img;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t shuffle_seed, int epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = count; i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  return order;
}

template <typename T>
BatchIterator<T>::BatchIterator(const std::vector<ImagePair>& pairs, int batch_size,
                                std::uint64_t shuffle_seed, int epoch)
    : pairs_(&pairs), batch_(static_cast<std::size_t>(batch_size)) {
  if (batch_size < 1) throw ContractError("batch_iter: batch_size must be >= 1");
  order_ = epoch_order(pairs.size(), shuffle_seed, epoch);
}

template <typename T>
std::optional<Batch<T>> BatchIterator<T>::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_);
  std::vector<const ImageLDR*> ldr;
  std::vector<const ImageHDR*> hdr;
  Batch<T> batch;
  for (std::size_t i = cursor_; i < end; ++i) {
    const ImagePair& p = (*pairs_)[order_[i]];
    ldr.push_back(&p.ldr);
    hdr.push_back(&p.hdr);
    batch.ids.push_back(p.id);
  }
  cursor_ = end;
  batch.ldr = ldr_to_tensor<T>(ldr);
  batch.hdr = hdr_to_tensor<T>(hdr);
  return batch;
}

template class BatchIterator<float>;
template class BatchIterator<double>;

template Tensor<float> ldr_to_tensor(const std::vector<const ImageLDR*>&);
template Tensor<double> ldr_to_tensor(const std::vector<const ImageLDR*>&);
template Tensor<float> hdr_to_tensor(const std::vector<const ImageHDR*>&);
template Tensor<double> hdr_to_tensor(const std::vector<const ImageHDR*>&);
template ImageHDR tensor_to_hdr(const Tensor<float>&, int);
template ImageHDR tensor_to_hdr(const Tensor<double>&, int);

}  // namespace fhdr
