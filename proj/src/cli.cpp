// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <optional>
#include <ostream>

#include "fhdr/gradcheck.hpp"
#include "fhdr/metrics.hpp"
#include "fhdr/parallel.hpp"

#ifndef FHDR_BUILD_ID
#define FHDR_BUILD_ID "unknown"
#endif

namespace fhdr::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw UsageError("config: bad value \"" + std::string(text) + "\" for " + std::string(key));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw UsageError("config: non-finite value for " + std::string(key));
    }
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError("config: bad boolean \"" + std::string(text) + "\" for " + std::string(key));
}

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string iso_time_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const Bytes bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

// Run record written before a command does any work and rewritten when it
// finishes. On success it lists only outputs that exist.
class RunManifest {
 public:
  RunManifest(fs::path path, std::string command, const std::vector<std::string>& args,
              std::uint64_t seed, json config)
      : path_(std::move(path)) {
    doc_["command"] = std::move(command);
    doc_["args"] = args;
    doc_["seed"] = seed;
    doc_["config"] = std::move(config);
    doc_["build"] = FHDR_BUILD_ID;
    doc_["threads"] = worker_threads();
    doc_["started_at"] = iso_time_now();
    doc_["status"] = "running";
    doc_["outputs"] = json::array();
    save();
  }

  void add_output(const fs::path& p) { outputs_.push_back(p); }

  void finish() {
    json list = json::array();
    for (const auto& p : outputs_) {
      if (fs::exists(p)) list.push_back(p.string());
    }
    doc_["outputs"] = list;
    doc_["finished_at"] = iso_time_now();
    doc_["status"] = "ok";
    save();
  }

 private:
  void save() const { write_text(path_, doc_.dump(2) + "\n"); }

  fs::path path_;
  json doc_;
  std::vector<fs::path> outputs_;
};

json config_json(const KeyValues& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

std::pair<int, int> parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw UsageError("--size: expected WxH, got " + text);
  const int w = parse_number<int>("--size", std::string_view(text).substr(0, x));
  const int h = parse_number<int>("--size", std::string_view(text).substr(x + 1));
  if (w < 1 || h < 1) throw UsageError("--size: dimensions must be positive");
  return {w, h};
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(sep, start);
    parts.push_back(trim(std::string_view(text).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

ImageLDR tonemap_preview(const ImageHDR& hdr, double mu) {
  ImageLDR ldr(hdr.width, hdr.height);
  for (std::size_t i = 0; i < hdr.pixels.size(); ++i) {
    const double t = std::clamp(tonemap_value(std::max(0.0f, hdr.pixels[i]), mu), 0.0, 1.0);
    ldr.pixels[i] = static_cast<std::uint8_t>(std::floor(t * 255.0 + 0.5));
  }
  return ldr;
}

PerceptualExtractor<float> load_extractor(const fs::path& path) {
  const CheckpointFile file = read_checkpoint(path);
  std::vector<std::pair<std::string, Tensor<float>>> named;
  for (const auto& r : file.records) named.emplace_back(r.name, r.to_tensor<float>());
  return PerceptualExtractor<float>::from_named(named);
}

// ------------------------------------------------------------ commands

struct ScenesArgs {
  std::string out_dir;
  int count = 4;
  std::string size = "256x128";
  std::uint64_t seed = 0;
};

int cmd_scenes(const ScenesArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const auto [w, h] = parse_size(a.size);
  if (a.count < 1) throw UsageError("--count must be >= 1");
  fs::create_directories(a.out_dir);
  RunManifest manifest(fs::path(a.out_dir) / "run_manifest.json", "scenes", argv, a.seed,
                       json{{"count", a.count}, {"size", a.size}});
  for (int i = 0; i < a.count; ++i) {
    const fs::path p = fs::path(a.out_dir) / ("scene_" + std::to_string(i) + ".pfm");
    save_hdr(p, synthetic_scene(w, h, derive_seed(a.seed, static_cast<std::uint64_t>(i))));
    manifest.add_output(p);
  }
  manifest.finish();
  out << "wrote " << a.count << " scenes to " << a.out_dir << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string hdr_dir;
  std::string out_dir;
  std::string size = "128x64";
  std::string ev_range = "-3,3";
  std::string curves;
  int specs_per_source = 3;
  std::uint64_t seed = 0;
  bool no_crop = false;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  SynthOptions opts;
  std::tie(opts.out_width, opts.out_height) = parse_size(a.size);
  const auto ev = split(a.ev_range, ',');
  if (ev.size() != 2) throw UsageError("--ev-range: expected MIN,MAX");
  opts.ev_min = parse_number<double>("--ev-range", ev[0]);
  opts.ev_max = parse_number<double>("--ev-range", ev[1]);
  if (opts.ev_min > opts.ev_max) throw UsageError("--ev-range: MIN exceeds MAX");
  if (!a.curves.empty()) {
    opts.curves.clear();
    try {
      for (const auto& d : split(a.curves, ',')) opts.curves.push_back(CameraCurve::parse(d));
    } catch (const ContractError& e) {
      throw UsageError(std::string("--curves: ") + e.what());
    }
  }
  if (a.specs_per_source < 1) throw UsageError("--specs-per-source must be >= 1");
  opts.specs_per_source = a.specs_per_source;
  opts.seed = a.seed;
  opts.augment.crop = !a.no_crop;

  fs::create_directories(a.out_dir);
  std::string curve_list;
  for (const auto& c : opts.curves) curve_list += (curve_list.empty() ? "" : ",") + c.descriptor();
  RunManifest manifest(fs::path(a.out_dir) / "run_manifest.json", "synth", argv, a.seed,
                       json{{"hdr_dir", a.hdr_dir},
                            {"size", a.size},
                            {"ev_min", opts.ev_min},
                            {"ev_max", opts.ev_max},
                            {"curves", curve_list},
                            {"specs_per_source", opts.specs_per_source},
                            {"crop", opts.augment.crop}});
  const SynthReport report = synthesize_dataset(a.hdr_dir, a.out_dir, opts);
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  if (report.entries.empty()) {
    err << "error: no pairs written (no readable .pfm/.hdr sources in " << a.hdr_dir << ")\n";
    return kExitFailure;
  }
  for (const auto& e : report.entries) {
    manifest.add_output(fs::path(a.out_dir) / "ldr" / (e.stem + ".ppm"));
    manifest.add_output(fs::path(a.out_dir) / "hdr" / (e.stem + ".pfm"));
  }
  manifest.add_output(fs::path(a.out_dir) / "manifest.csv");
  manifest.finish();
  out << "wrote " << report.entries.size() << " pairs to " << a.out_dir << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::optional<int> iterations;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<double> lr;
};

KeyValues read_config(const std::string& path) {
  if (path.empty()) return {};
  std::string text;
  try {
    text = read_text(path);
  } catch (const std::exception& e) {
    throw UsageError("--config: " + std::string(e.what()));
  }
  return parse_key_values(text);
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  KeyValues kv = read_config(a.config);
  std::string weights;
  if (auto it = kv.find("perceptual_weights"); it != kv.end()) {
    weights = it->second;
    kv.erase(it);
  }
  TrainConfig cfg;
  apply_train_config(kv, cfg);
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.seed) cfg.seed = *a.seed;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.lr) cfg.lr0 = *a.lr;
  // decay starts halfway unless configured: 100 of the default 200 epochs
  if (!kv.contains("decay_start_epoch")) cfg.decay_start_epoch = std::max(1, (cfg.epochs + 1) / 2);
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }

  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  const std::string snapshot = format_train_config(cfg);
  RunManifest manifest(out_dir / "run_manifest.json", "train", argv, cfg.seed,
                       config_json(parse_key_values(snapshot)));
  write_text(out_dir / "config.txt", snapshot);
  manifest.add_output(out_dir / "config.txt");

  PerceptualExtractor<float> extractor =
      weights.empty() ? PerceptualExtractor<float>() : load_extractor(weights);
  LoadResult data = load_dataset(a.data);
  for (const auto& w : data.warnings) err << "warning: " << w << "\n";
  for (const auto& e : data.errors) err << "warning: skipped " << e << "\n";
  if (data.pairs.empty()) throw std::runtime_error("no readable pairs under " + a.data);

  std::optional<TrainState<float>> resume;
  if (!a.resume.empty()) {
    resume = TrainState<float>::from_checkpoint(read_checkpoint(a.resume), cfg.model_config());
  }
  TrainRunOptions options;
  options.out_dir = out_dir;
  options.resume = resume.has_value();
  options.on_epoch = [&](const EpochLog& row) {
    out << "epoch " << row.epoch << " loss " << number(row.mean_loss) << " psnr "
        << number(row.mean_psnr) << " lr " << number(row.lr) << "\n";
    if (cfg.checkpoint_every > 0 && (row.epoch + 1) % cfg.checkpoint_every == 0) {
      manifest.add_output(out_dir / ("epoch_" + std::to_string(row.epoch + 1) + ".ckpt"));
    }
  };
  train(cfg, data.pairs, options, std::move(resume), std::move(extractor));
  for (const char* name : {"log.csv", "best.ckpt", "final.ckpt"}) manifest.add_output(out_dir / name);
  manifest.finish();
  out << "wrote " << (out_dir / "final.ckpt").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  std::string config;
  double mu = 5000.0;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out,
             std::ostream& err) {
  if (!(a.mu > 0.0)) throw UsageError("--mu must be positive");
  std::optional<ModelConfig> expected;
  if (!a.config.empty()) {
    TrainConfig cfg;
    KeyValues kv = read_config(a.config);
    kv.erase("perceptual_weights");
    apply_train_config(kv, cfg);
    expected = cfg.model_config();
  }
  const fs::path out_dir = a.out;
  fs::create_directories(out_dir);
  RunManifest manifest(out_dir / "run_manifest.json", "eval", argv, 0,
                       json{{"ckpt", a.ckpt}, {"data", a.data}, {"mu", a.mu}});
  const CheckpointFile file = read_checkpoint(a.ckpt);
  if (expected) require_config(file, *expected);
  const FhdrParams<float> params = params_from_checkpoint<float>(file);

  LoadResult data = load_dataset(a.data);
  for (const auto& w : data.warnings) err << "warning: " << w << "\n";
  for (const auto& e : data.errors) err << "warning: skipped " << e << "\n";
  if (data.pairs.empty()) throw std::runtime_error("no readable pairs under " + a.data);

  std::vector<std::string> errors;
  const MetricReport report = evaluate(params, file.config.iterations, data.pairs, a.mu, &errors);
  for (const auto& e : errors) err << "warning: " << e << "\n";
  write_text(out_dir / "metrics.csv", report.rows_csv());
  write_text(out_dir / "metrics_mean.csv", report.means_csv());
  manifest.add_output(out_dir / "metrics.csv");
  manifest.add_output(out_dir / "metrics_mean.csv");
  manifest.finish();
  for (const auto& m : report.means) {
    out << "t=" << m.iteration << " psnr " << number(m.psnr_db) << " ssim " << number(m.ssim)
        << "\n";
  }
  return kExitOk;
}

struct InferArgs {
  std::string ckpt;
  std::string in;
  std::string out;
  std::string iteration;
  bool preview = false;
  double mu = 5000.0;
};

int cmd_infer(const InferArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const fs::path out_path = a.out;
  if (!is_hdr_extension(out_path)) throw UsageError("--out must end in .pfm or .hdr");
  const CheckpointFile file = read_checkpoint(a.ckpt);
  const int n = file.config.iterations;
  int first = n;
  int last = n;
  if (a.iteration == "all") {
    first = 1;
  } else if (!a.iteration.empty()) {
    const int t = parse_number<int>("--iteration", a.iteration);
    if (t < 1 || t > n) {
      throw UsageError("--iteration " + a.iteration + " outside 1.." + std::to_string(n));
    }
    first = last = t;
  }
  const fs::path dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  fs::create_directories(dir);
  RunManifest manifest(dir / (out_path.stem().string() + ".run_manifest.json"), "infer", argv, 0,
                       json{{"ckpt", a.ckpt}, {"in", a.in}, {"iteration", a.iteration}});
  const FhdrParams<float> params = params_from_checkpoint<float>(file);
  const ImageLDR ldr = load_ldr(a.in);
  const auto outputs = predict(params, ldr, last);
  for (int t = first; t <= last; ++t) {
    fs::path p = out_path;
    if (first != last) {
      p = dir / (out_path.stem().string() + "_t" + std::to_string(t) + out_path.extension().string());
    }
    save_hdr(p, outputs[t - 1]);
    manifest.add_output(p);
    out << "wrote " << p.string() << "\n";
    if (a.preview) {
      const fs::path preview = dir / (p.stem().string() + "_preview.ppm");
      save_ldr(preview, tonemap_preview(outputs[t - 1], a.mu));
      manifest.add_output(preview);
    }
  }
  manifest.finish();
  return kExitOk;
}

struct GradcheckArgs {
  std::string scope = "all";
  bool inject_fault = false;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  GradcheckOptions opts;
  opts.tolerance = a.tolerance;
  opts.seed = a.seed;
  opts.inject_conv_fault = a.inject_fault;
  std::vector<GradcheckResult> results;
  if (a.scope == "ops" || a.scope == "all") results = gradcheck_ops(opts);
  if (a.scope == "model" || a.scope == "all") {
    auto model = gradcheck_model(opts);
    results.insert(results.end(), model.begin(), model.end());
  }
  std::vector<std::string> failed;
  for (const auto& r : results) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-40s max_rel_err %.3e  checked %zu  skipped %zu  %s\n",
                  r.name.c_str(), r.max_rel_error, r.checked, r.skipped,
                  r.passed ? "ok" : "FAIL");
    out << line;
    if (!r.passed) failed.push_back(r.name);
  }
  if (!failed.empty()) {
    err << "gradcheck failed:";
    for (const auto& f : failed) err << " " << f;
    err << "\n";
    return kExitFailure;
  }
  out << "all " << results.size() << " checks passed\n";
  return kExitOk;
}

}  // namespace

// ------------------------------------------------------------ config text

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const std::string line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key)) {
      throw UsageError("config line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    kv.emplace(std::move(key), trim(std::string_view(line).substr(eq + 1)));
  }
  return kv;
}

void apply_train_config(const KeyValues& values, TrainConfig& cfg) {
  using Setter = std::function<void(std::string_view, std::string_view)>;
  auto as_int = [](int& f) -> Setter {
    return [&f](std::string_view k, std::string_view v) { f = parse_number<int>(k, v); };
  };
  auto as_real = [](double& f) -> Setter {
    return [&f](std::string_view k, std::string_view v) { f = parse_number<double>(k, v); };
  };
  const std::map<std::string, Setter, std::less<>> setters = {
      {"epochs", as_int(cfg.epochs)},
      {"lr0", as_real(cfg.lr0)},
      {"decay_start_epoch", as_int(cfg.decay_start_epoch)},
      {"lr_floor", as_real(cfg.lr_floor)},
      {"adam_beta1", as_real(cfg.adam_beta1)},
      {"adam_beta2", as_real(cfg.adam_beta2)},
      {"adam_eps", as_real(cfg.adam_eps)},
      {"batch_size", as_int(cfg.batch_size)},
      {"iterations", as_int(cfg.iterations)},
      {"seed",
       [&cfg](std::string_view k, std::string_view v) {
         cfg.seed = parse_number<std::uint64_t>(k, v);
       }},
      {"mu", as_real(cfg.loss.mu)},
      {"lambda", as_real(cfg.loss.lambda)},
      {"perceptual",
       [&cfg](std::string_view k, std::string_view v) {
         cfg.loss.perceptual_enabled = parse_bool(k, v);
       }},
      {"grad_clip", as_real(cfg.grad_clip)},
      {"checkpoint_every", as_int(cfg.checkpoint_every)},
      {"base_channels", as_int(cfg.model.base_channels)},
      {"growth_rate", as_int(cfg.model.growth_rate)},
      {"num_ddb", as_int(cfg.model.num_ddb)},
      {"dilated_layers_per_ddb", as_int(cfg.model.dilated_layers_per_ddb)},
      {"dilation", as_int(cfg.model.dilation)},
  };
  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw UsageError("config: unknown key " + key);
    it->second(key, value);
  }
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string s;
  auto put = [&s](const char* k, const std::string& v) { s += std::string(k) + "=" + v + "\n"; };
  put("epochs", std::to_string(cfg.epochs));
  put("lr0", number(cfg.lr0));
  put("decay_start_epoch", std::to_string(cfg.decay_start_epoch));
  put("lr_floor", number(cfg.lr_floor));
  put("adam_beta1", number(cfg.adam_beta1));
  put("adam_beta2", number(cfg.adam_beta2));
  put("adam_eps", number(cfg.adam_eps));
  put("batch_size", std::to_string(cfg.batch_size));
  put("iterations", std::to_string(cfg.iterations));
  put("seed", std::to_string(cfg.seed));
  put("mu", number(cfg.loss.mu));
  put("lambda", number(cfg.loss.lambda));
  put("perceptual", cfg.loss.perceptual_enabled ? "true" : "false");
  put("grad_clip", number(cfg.grad_clip));
  put("checkpoint_every", std::to_string(cfg.checkpoint_every));
  put("base_channels", std::to_string(cfg.model.base_channels));
  put("growth_rate", std::to_string(cfg.model.growth_rate));
  put("num_ddb", std::to_string(cfg.model.num_ddb));
  put("dilated_layers_per_ddb", std::to_string(cfg.model.dilated_layers_per_ddb));
  put("dilation", std::to_string(cfg.model.dilation));
  return s;
}

// ------------------------------------------------------------ dispatch

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-image LDR to HDR reconstruction with a feedback network"};
  app.name("fhdr");
  app.require_subcommand(1);

  ScenesArgs scenes;
  auto* scenes_cmd = app.add_subcommand("scenes", "Write procedural HDR scenes (PFM)");
  scenes_cmd->add_option("--out-dir", scenes.out_dir, "Output directory")->required();
  scenes_cmd->add_option("--count", scenes.count, "Number of scenes")->capture_default_str();
  scenes_cmd->add_option("--size", scenes.size, "WxH")->capture_default_str();
  scenes_cmd->add_option("--seed", scenes.seed, "Random seed")->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Build LDR/HDR training pairs from HDR sources");
  synth_cmd->add_option("--hdr-dir", synth.hdr_dir, "Directory of .pfm/.hdr sources")->required();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Dataset root to write")->required();
  synth_cmd->add_option("--size", synth.size, "Output WxH")->capture_default_str();
  synth_cmd->add_option("--ev-range", synth.ev_range, "Exposure range MIN,MAX in stops")
      ->capture_default_str();
  synth_cmd->add_option("--curves", synth.curves,
                        "Comma-separated curves, e.g. gamma:0.4545,sigmoid:6:0.5");
  synth_cmd->add_option("--specs-per-source", synth.specs_per_source, "Pairs per source")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_flag("--no-crop", synth.no_crop, "Resize whole sources without cropping");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", train_args.data, "Dataset root (ldr/ and hdr/)")->required();
  train_cmd->add_option("--config", train_args.config, "key=value config file");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--iterations", train_args.iterations, "Feedback iterations n");
  train_cmd->add_option("--epochs", train_args.epochs, "Epochs");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--batch-size", train_args.batch_size, "Batch size");
  train_cmd->add_option("--lr", train_args.lr, "Initial learning rate");
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to continue from");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of every iteration on a dataset");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", eval_args.data, "Dataset root")->required();
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--config", eval_args.config, "Expected model config (key=value)");
  eval_cmd->add_option("--mu", eval_args.mu, "Tonemapping mu")->capture_default_str();

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Reconstruct HDR from one LDR image");
  infer_cmd->add_option("--ckpt", infer_args.ckpt, "Checkpoint")->required();
  infer_cmd->add_option("--in", infer_args.in, "Input LDR (.ppm)")->required();
  infer_cmd->add_option("--out", infer_args.out, "Output HDR (.pfm or .hdr)")->required();
  infer_cmd->add_option("--iteration", infer_args.iteration, "t in 1..n, or all (default n)");
  infer_cmd->add_flag("--tonemap-preview", infer_args.preview, "Also write a mu-law PPM preview");

  GradcheckArgs gc_args;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc_cmd->add_option("--scope", gc_args.scope, "ops, model or all")
      ->check(CLI::IsMember({"ops", "model", "all"}))
      ->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_args.tolerance, "Max relative error")->capture_default_str();
  gc_cmd->add_option("--seed", gc_args.seed, "Random seed")->capture_default_str();
  gc_cmd->add_flag("--inject-fault", gc_args.inject_fault, "Corrupt the conv weight gradient")
      ->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    for (const auto* sub : app.get_subcommands()) err << sub->help();
    if (app.get_subcommands().empty()) err << app.help();
    return kExitUsage;
  }

  try {
    if (scenes_cmd->parsed()) return cmd_scenes(scenes, args, out);
    if (synth_cmd->parsed()) return cmd_synth(synth, args, out, err);
    if (train_cmd->parsed()) return cmd_train(train_args, args, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, args, out, err);
    if (infer_cmd->parsed()) return cmd_infer(infer_args, args, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fhdr::cli
