// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fhdr/checkpoint.hpp"
#include "fhdr/data.hpp"
#include "fhdr/training.hpp"

namespace fhdr {
namespace {

namespace fs = std::filesystem;

std::vector<ImagePair> scene_pairs(int count, int size) {
  std::vector<ImagePair> pairs;
  const auto curves = default_curves();
  for (int i = 0; i < count; ++i) {
    const ImageHDR big = normalize_hdr(synthetic_scene(2 * size, 2 * size, 100 + i));
    ImagePair p;
    p.hdr = normalize_hdr(resize_hdr(big, CropWindow{0, 0, 2 * size, 2 * size}, size, size));
    p.ldr = synth_ldr(p.hdr, SynthSpec{-1.0 + i, curves[i % curves.size()], 8});
    p.id = "scene" + std::to_string(i);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model.base_channels = 8;
  cfg.model.growth_rate = 4;
  cfg.iterations = 2;
  cfg.epochs = 3;
  cfg.decay_start_epoch = 2;
  cfg.batch_size = 2;
  cfg.seed = 5;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fhdr_training_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(LrSchedule, Examples) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_schedule(0, cfg), 2e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(99, cfg), 2e-4);
  EXPECT_NEAR(lr_schedule(150, cfg), 1.0e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(199, cfg), 2e-4 / 100, 1e-18);
  EXPECT_THROW(lr_schedule(200, cfg), ContractError);
  EXPECT_THROW(lr_schedule(-1, cfg), ContractError);
  cfg.lr_floor = 5e-5;
  EXPECT_DOUBLE_EQ(lr_schedule(199, cfg), 5e-5);
}

TEST(LrSchedule, ConfigInvariants) {
  TrainConfig cfg;
  cfg.decay_start_epoch = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg.decay_start_epoch = 201;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.lr0 = 0.0;
  EXPECT_THROW(cfg.validate(), ContractError);
}

using Named = std::vector<std::pair<std::string, Tensor<double>>>;

TEST(Adam, ZeroGradientLeavesParameters) {
  Named p = {{"w", Tensor<double>({1, 3, 1, 1}, {1.0, -2.0, 3.0}, true)}};
  p[0].second.zero_grad();
  auto m = AdamMoments<double>::zeros_like(p);
  adam_step<double>(p, m, 1e-3, AdamHyper{});
  EXPECT_EQ(std::vector<double>(p[0].second.data().begin(), p[0].second.data().end()),
            (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(m.step, 1);
}

TEST(Adam, UnitGradientMovesByLr) {
  Named p = {{"w", Tensor<double>::scalar(0.5, true)}};
  p[0].second.grad_buffer()[0] = 1.0;
  auto m = AdamMoments<double>::zeros_like(p);
  adam_step<double>(p, m, 2e-4, AdamHyper{});
  // m_hat = 1, v_hat = 1 -> step lr / (1 + eps)
  EXPECT_NEAR(0.5 - p[0].second.item(), 2e-4, 1e-11);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Named p = {{"a", Tensor<double>::scalar(1.0, true)}, {"b.weight", Tensor<double>::scalar(2.0, true)}};
  p[0].second.grad_buffer()[0] = 1.0;
  p[1].second.grad_buffer()[0] = std::numeric_limits<double>::quiet_NaN();
  auto m = AdamMoments<double>::zeros_like(p);
  try {
    adam_step<double>(p, m, 1e-3, AdamHyper{});
    FAIL() << "expected NonFiniteGradientError";
  } catch (const NonFiniteGradientError& e) {
    EXPECT_EQ(e.parameter, "b.weight");
  }
  EXPECT_EQ(p[0].second.item(), 1.0);  // nothing applied
  EXPECT_EQ(m.step, 0);
}

TEST(Adam, ClipGradientsBoundsNorm) {
  Named p = {{"w", Tensor<double>({1, 2, 1, 1}, {0.0, 0.0}, true)}};
  p[0].second.grad_buffer()[0] = 3.0;
  p[0].second.grad_buffer()[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_gradients<double>(p, 1.0), 5.0);
  EXPECT_NEAR(p[0].second.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(p[0].second.grad()[1], 0.8, 1e-15);
}

TEST(Trainer, TenStepsAreDeterministic) {
  const auto data = scene_pairs(4, 12);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 10;
  cfg.decay_start_epoch = 10;
  Trainer<float> a(cfg, data);
  Trainer<float> b(cfg, data);
  for (int i = 0; i < 10; ++i) {
    const auto ra = a.step();
    const auto rb = b.step();
    ASSERT_EQ(ra.loss, rb.loss) << i;
  }
  const auto pa = a.params().named_parameters();
  const auto pb = b.params().named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].second.numel(); ++j)
      ASSERT_EQ(pa[i].second.data()[j], pb[i].second.data()[j]) << pa[i].first;
}

TEST(Trainer, LossDropsOnSmallOverfitSet) {
  const auto data = scene_pairs(4, 32);
  TrainConfig cfg;
  cfg.model.base_channels = 16;
  cfg.model.growth_rate = 8;
  cfg.iterations = 2;
  cfg.batch_size = 4;
  cfg.epochs = 500;
  cfg.decay_start_epoch = 500;
  cfg.seed = 1;
  Trainer<float> t(cfg, data);
  double at10 = 0.0;
  double at500 = 0.0;
  for (int s = 1; s <= 500; ++s) {
    const double loss = t.step().loss;
    ASSERT_TRUE(std::isfinite(loss));
    if (s == 10) at10 = loss;
    if (s == 500) at500 = loss;
  }
  EXPECT_LT(at500, at10);
}

TEST(Trainer, FeedForwardVariantTrains) {
  const auto data = scene_pairs(2, 12);
  TrainConfig cfg = tiny_config();
  cfg.iterations = 1;
  Trainer<float> t(cfg, data);
  const auto log = t.run_epoch();
  EXPECT_TRUE(std::isfinite(log.mean_loss));
  EXPECT_EQ(t.params().config.iterations, 1);
}

TEST(Trainer, MidEpochResumeMatchesNextStep) {
  const auto data = scene_pairs(6, 12);
  TrainConfig cfg = tiny_config();
  Trainer<float> straight(cfg, data);
  straight.step();
  straight.step();
  ASSERT_EQ(straight.state().batch, 2);

  // persist, reload, continue
  const Bytes saved = encode_checkpoint(straight.state().to_checkpoint());
  auto state = TrainState<float>::from_checkpoint(decode_checkpoint(saved), cfg.model_config());
  Trainer<float> resumed(cfg, data, state);

  const auto a = straight.step();
  const auto b = resumed.step();
  EXPECT_LE(std::abs(b.loss - a.loss), 1e-6 * std::abs(a.loss));
  EXPECT_EQ(b.loss, a.loss);
  // third of three batches closes the epoch on both
  ASSERT_TRUE(a.epoch_done.has_value());
  ASSERT_TRUE(b.epoch_done.has_value());
  EXPECT_EQ(a.epoch_done->mean_loss, b.epoch_done->mean_loss);
}

TEST(Trainer, NonFiniteParametersHaltWithDiagnostic) {
  const auto data = scene_pairs(2, 12);
  TrainConfig cfg = tiny_config();
  Trainer<float> healthy(cfg, data);
  auto state = healthy.state();
  for (auto& w : state.params.hrb2.bias.mutable_data()) w = std::numeric_limits<float>::quiet_NaN();
  const auto out = fresh_dir("nan");
  try {
    train(cfg, data, TrainRunOptions{out, false, {}}, state);
    FAIL() << "expected TrainingHalted";
  } catch (const TrainingHalted& halt) {
    EXPECT_NE(std::string(halt.what()).find("non-finite"), std::string::npos);
    EXPECT_NE(halt.diagnostic.find("param/hrb.conv2.bias"), nullptr);
  }
  EXPECT_TRUE(fs::exists(out / "diagnostic.ckpt"));
  EXPECT_NO_THROW(read_checkpoint(out / "diagnostic.ckpt"));
  fs::remove_all(out);
}

TEST(Train, WritesLogAndCheckpoints) {
  const auto data = scene_pairs(4, 12);
  TrainConfig cfg = tiny_config();
  cfg.checkpoint_every = 2;
  const auto out = fresh_dir("run");
  std::vector<int> seen;
  const auto result =
      train(cfg, data, TrainRunOptions{out, false, [&](const EpochLog& l) { seen.push_back(l.epoch); }});
  EXPECT_EQ(result.log.size(), 3u);
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2}));
  EXPECT_TRUE(fs::exists(out / "final.ckpt"));
  EXPECT_TRUE(fs::exists(out / "best.ckpt"));
  EXPECT_TRUE(fs::exists(out / "epoch_2.ckpt"));
  EXPECT_FALSE(fs::exists(out / "epoch_3.ckpt"));
  const auto bytes = read_file(out / "log.csv");
  const std::string log(bytes.begin(), bytes.end());
  EXPECT_EQ(log.substr(0, log.find('\n') + 1), epoch_log_header());
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  EXPECT_DOUBLE_EQ(result.log[2].lr, lr_schedule(2, cfg));
  fs::remove_all(out);
}

// ------------------------------------------------------------ checkpoints

TEST(Checkpoint, RoundTripsEveryTensor) {
  const auto data = scene_pairs(4, 12);
  Trainer<float> t(tiny_config(), data);
  t.step();
  const auto file = t.state().to_checkpoint();
  const auto back = decode_checkpoint(encode_checkpoint(file));
  EXPECT_EQ(back.version, kCheckpointVersion);
  EXPECT_EQ(back.config, file.config);
  ASSERT_EQ(back.records.size(), file.records.size());
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    EXPECT_EQ(back.records[i].name, file.records[i].name);
    EXPECT_EQ(back.records[i].dtype, file.records[i].dtype);
    EXPECT_EQ(back.records[i].extents, file.records[i].extents);
    EXPECT_EQ(back.records[i].raw, file.records[i].raw);
  }
  const auto state = TrainState<float>::from_checkpoint(back, tiny_config().model_config());
  EXPECT_EQ(state.adam.step, 1);
  EXPECT_EQ(state.batch, 1);
  EXPECT_EQ(state.shuffle_seed, t.state().shuffle_seed);
}

TEST(Checkpoint, HeaderLayout) {
  CheckpointFile f;
  f.records.push_back(TensorRecord::from_i64("n", std::vector<std::int64_t>{7}));
  const auto bytes = encode_checkpoint(f);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "FHDRCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9] | bytes[10] | bytes[11], 0);
}

TEST(Checkpoint, ConfigMismatchNamesBoth) {
  const auto data = scene_pairs(2, 12);
  Trainer<float> t(tiny_config(), data);
  const auto file = t.state().to_checkpoint();
  ModelConfig other = tiny_config().model_config();
  other.base_channels = 16;
  try {
    (void)TrainState<float>::from_checkpoint(file, other);
    FAIL() << "expected ConfigMismatchError";
  } catch (const ConfigMismatchError& e) {
    EXPECT_EQ(e.expected, other);
    EXPECT_EQ(e.found, file.config);
    EXPECT_NE(std::string(e.what()).find("base_channels=16"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("base_channels=8"), std::string::npos);
  }
}

TEST(Checkpoint, FutureVersionIsRejected) {
  CheckpointFile f;
  auto bytes = encode_checkpoint(f);
  bytes[8] = 2;
  try {
    (void)decode_checkpoint(bytes);
    FAIL() << "expected UnsupportedVersionError";
  } catch (const UnsupportedVersionError& e) {
    EXPECT_EQ(e.version(), 2u);
    EXPECT_EQ(e.offset(), 8u);
  }
}

TEST(Checkpoint, TruncationAndGarbageAreParseErrors) {
  CheckpointFile f;
  f.records.push_back(TensorRecord::from_f64("acc", std::vector<double>{1.0, 2.0}));
  f.records.push_back(
      TensorRecord::from_tensor("w", Tensor<float>({1, 2, 1, 2}, {1.f, 2.f, 3.f, 4.f})));
  const auto bytes = encode_checkpoint(f);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW((void)decode_checkpoint(std::span(bytes.data(), n)), ParseError) << n;
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW((void)decode_checkpoint(bad_magic), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW((void)decode_checkpoint(trailing), ParseError);
  auto bad_dtype = bytes;
  bad_dtype[8 + 4 + 24 + 4 + 4 + 3] = 9;  // dtype byte of the first record
  EXPECT_THROW((void)decode_checkpoint(bad_dtype), ParseError);
}

TEST(Checkpoint, ConvertsPrecision) {
  Tensor<double> d({1, 1, 1, 3}, {0.25, -1.5, 3.0});
  const auto rec = TensorRecord::from_tensor("x", d);
  const auto f = rec.to_tensor<float>();
  EXPECT_EQ(std::vector<float>(f.data().begin(), f.data().end()),
            (std::vector<float>{0.25f, -1.5f, 3.0f}));
  EXPECT_THROW((void)TensorRecord::from_f64("y", std::vector<double>{1.0}).to_i64(),
               std::exception);
}

// ------------------------------------------------------------ evaluation

TEST(Evaluate, OraclePredictorHitsCaps) {
  const auto data = scene_pairs(3, 12);
  Predictor oracle = [&](const ImageLDR& ldr) {
    for (const auto& p : data)
      if (p.ldr.pixels == ldr.pixels) return std::vector<ImageHDR>{p.hdr, p.hdr};
    return std::vector<ImageHDR>{};
  };
  const auto report = evaluate(oracle, data, 5000.0);
  ASSERT_EQ(report.rows.size(), 6u);
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.psnr_db, 100.0);
    EXPECT_NEAR(r.ssim, 1.0, 1e-9);
  }
  EXPECT_EQ(report.rows[0].image_id, "scene0");
  EXPECT_EQ(report.rows[1].iteration, 2);
}

TEST(Evaluate, RowsPerIterationAndItemErrors) {
  auto data = scene_pairs(3, 12);
  const auto params = FhdrParams<float>::init(tiny_config().model_config(), 3);
  auto report = evaluate(params, 3, data, 5000.0);
  EXPECT_EQ(report.rows.size(), 9u);
  EXPECT_EQ(report.means.size(), 3u);

  // ground truth of the wrong size is an item error, the rest still score
  data[1].hdr = ImageHDR(11, 11);
  std::vector<std::string> errors;
  report = evaluate(params, 3, data, 5000.0, &errors);
  EXPECT_EQ(report.rows.size(), 6u);
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_NE(errors[0].find("scene1"), std::string::npos);
}

TEST(Ablation, OneCurvePerN) {
  const auto data = scene_pairs(2, 12);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.decay_start_epoch = 1;
  const auto result = ablate_iterations(cfg, data, data, {1, 2, 3});
  ASSERT_EQ(result.param_counts.size(), 3u);
  for (const auto& [n, count] : result.param_counts) EXPECT_EQ(count, result.param_counts[0].second);
  EXPECT_EQ(result.rows.size(), 6u);
  for (const auto& r : result.rows) EXPECT_TRUE(std::isfinite(r.psnr));
  const auto csv = result.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,n,psnr");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

}  // namespace
}  // namespace fhdr
