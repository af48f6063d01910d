// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fhdr/checkpoint.hpp"
#include "fhdr/cli.hpp"
#include "fhdr/data.hpp"
#include "fhdr/image_io.hpp"

namespace fhdr {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p);
  return std::string(b.begin(), b.end());
}

int line_count(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

// One scratch tree per test binary: sources, a synthesized dataset, a tiny
// trained model.
class CliFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "fhdr_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run({"scenes", "--out-dir", (root_ / "src").string(), "--count", "2", "--size",
                   "40x32", "--seed", "3"})
                  .code,
              0);
    ASSERT_EQ(run({"synth", "--hdr-dir", (root_ / "src").string(), "--out-dir",
                   (root_ / "data").string(), "--size", "16x16", "--seed", "4"})
                  .code,
              0);
    std::ofstream(root_ / "tiny.cfg") << "# small model\nbase_channels = 8\ngrowth_rate=4\n"
                                         "batch_size=3\niterations=2\n";
    const auto r = run({"train", "--data", (root_ / "data").string(), "--config",
                        (root_ / "tiny.cfg").string(), "--out", (root_ / "run").string(),
                        "--epochs", "1", "--seed", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path root_;
};

fs::path CliFixture::root_;

TEST(CliConfig, ParsesKeyValues) {
  const auto kv = cli::parse_key_values("# comment\n\n epochs = 3 \nlr0=1e-3\n");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("epochs"), "3");
  EXPECT_EQ(kv.at("lr0"), "1e-3");
  EXPECT_THROW(cli::parse_key_values("epochs 3\n"), cli::UsageError);
  EXPECT_THROW(cli::parse_key_values("a=1\na=2\n"), cli::UsageError);
}

TEST(CliConfig, TypedAssignmentAndErrors) {
  TrainConfig cfg;
  cli::apply_train_config({{"epochs", "7"}, {"lambda", "0.5"}, {"perceptual", "false"}}, cfg);
  EXPECT_EQ(cfg.epochs, 7);
  EXPECT_EQ(cfg.loss.lambda, 0.5);
  EXPECT_FALSE(cfg.loss.perceptual_enabled);
  EXPECT_THROW(cli::apply_train_config({{"no_such_key", "1"}}, cfg), cli::UsageError);
  EXPECT_THROW(cli::apply_train_config({{"epochs", "three"}}, cfg), cli::UsageError);
}

TEST(CliConfig, FormatRoundTrips) {
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.lr0 = 3.25e-4;
  cfg.model.growth_rate = 5;
  cfg.seed = 99;
  TrainConfig back;
  cli::apply_train_config(cli::parse_key_values(cli::format_train_config(cfg)), back);
  EXPECT_EQ(cli::format_train_config(back), cli::format_train_config(cfg));
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.lr0, cfg.lr0);
}

TEST(CliUsage, MissingDataIsUsageError) {
  const auto r = run({"train", "--out", "unused"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--data"), std::string::npos);
}

TEST(CliUsage, NoSubcommandIsUsageError) { EXPECT_EQ(run({}).code, 2); }

TEST_F(CliFixture, InvalidConfigIsUsageError) {
  const auto r = run({"train", "--data", (root_ / "data").string(), "--out",
                      (root_ / "bad").string(), "--epochs", "0"});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST_F(CliFixture, SynthWritesSixPairsDeterministically) {
  EXPECT_EQ(dataset_scan(root_ / "data").pairs.size(), 6u);
  const auto again = root_ / "data_again";
  ASSERT_EQ(run({"synth", "--hdr-dir", (root_ / "src").string(), "--out-dir", again.string(),
                 "--size", "16x16", "--seed", "4"})
                .code,
            0);
  for (const auto& entry : fs::recursive_directory_iterator(root_ / "data")) {
    if (!entry.is_regular_file() || entry.path().filename() == "run_manifest.json") continue;
    const auto rel = fs::relative(entry.path(), root_ / "data");
    EXPECT_EQ(read_file(entry.path()), read_file(again / rel)) << rel;
  }
}

TEST_F(CliFixture, SynthWarnsOnMalformedSource) {
  const auto src = root_ / "src_broken";
  fs::create_directories(src);
  fs::copy_file(root_ / "src" / "scene_0.pfm", src / "good.pfm");
  write_file(src / "bad.pfm", Bytes{'P', 'F', '\n', '9'});
  const auto r = run({"synth", "--hdr-dir", src.string(), "--out-dir",
                      (root_ / "data_broken").string(), "--size", "16x16"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("bad.pfm"), std::string::npos) << r.err;
  EXPECT_EQ(dataset_scan(root_ / "data_broken").pairs.size(), 3u);
}

TEST_F(CliFixture, SynthWithNoSourcesFails) {
  fs::create_directories(root_ / "empty_src");
  EXPECT_EQ(run({"synth", "--hdr-dir", (root_ / "empty_src").string(), "--out-dir",
                 (root_ / "nothing").string()})
                .code,
            1);
}

TEST_F(CliFixture, TrainWritesCheckpointLogAndManifest) {
  const auto run_dir = root_ / "run";
  EXPECT_TRUE(fs::exists(run_dir / "final.ckpt"));
  const auto log = slurp(run_dir / "log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,mean_loss,lr,seconds");
  EXPECT_EQ(line_count(log), 2);
  const auto m = nlohmann::json::parse(slurp(run_dir / "run_manifest.json"));
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_EQ(m.at("status"), "ok");
  EXPECT_EQ(m.at("seed"), 2);
  for (const auto& p : m.at("outputs")) EXPECT_TRUE(fs::exists(p.get<std::string>())) << p;
  const auto ckpt = read_checkpoint(run_dir / "final.ckpt");
  EXPECT_EQ(ckpt.config.base_channels, 8);
  EXPECT_EQ(ckpt.config.iterations, 2);
}

TEST_F(CliFixture, EvalRowsAreImagesTimesIterations) {
  const auto r = run({"eval", "--ckpt", (root_ / "run" / "final.ckpt").string(), "--data",
                      (root_ / "data").string(), "--out", (root_ / "eval").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(slurp(root_ / "eval" / "metrics.csv")), 1 + 6 * 2);
  EXPECT_EQ(line_count(slurp(root_ / "eval" / "metrics_mean.csv")), 1 + 2);
  EXPECT_NE(r.out.find("t=2"), std::string::npos);
}

TEST_F(CliFixture, EvalMissingCheckpointFails) {
  EXPECT_EQ(run({"eval", "--ckpt", (root_ / "nope.ckpt").string(), "--data",
                 (root_ / "data").string(), "--out", (root_ / "eval2").string()})
                .code,
            1);
}

TEST_F(CliFixture, EvalConfigMismatchNamesBoth) {
  std::ofstream(root_ / "wide.cfg") << "base_channels=16\ngrowth_rate=4\niterations=2\n";
  const auto r = run({"eval", "--ckpt", (root_ / "run" / "final.ckpt").string(), "--data",
                      (root_ / "data").string(), "--out", (root_ / "eval3").string(), "--config",
                      (root_ / "wide.cfg").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("expected"), std::string::npos);
  EXPECT_NE(r.err.find("found"), std::string::npos);
}

TEST_F(CliFixture, InferAllWritesOneImagePerIteration) {
  const auto ldr = dataset_scan(root_ / "data").pairs.at(0).ldr_path;
  const auto out = root_ / "infer" / "out.pfm";
  const auto r = run({"infer", "--ckpt", (root_ / "run" / "final.ckpt").string(), "--in",
                      ldr.string(), "--out", out.string(), "--iteration", "all",
                      "--tonemap-preview"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto input = load_ldr(ldr);
  for (int t = 1; t <= 2; ++t) {
    const auto p = root_ / "infer" / ("out_t" + std::to_string(t) + ".pfm");
    ASSERT_TRUE(fs::exists(p)) << p;
    const auto img = load_hdr(p);
    EXPECT_EQ(img.width, input.width);
    EXPECT_EQ(img.height, input.height);
    const auto preview = load_ldr(root_ / "infer" / ("out_t" + std::to_string(t) + "_preview.ppm"));
    EXPECT_EQ(preview.width, input.width);
  }
  EXPECT_FALSE(fs::exists(root_ / "infer" / "out_t3.pfm"));
}

TEST_F(CliFixture, InferIterationBeyondNIsUsageError) {
  const auto ldr = dataset_scan(root_ / "data").pairs.at(0).ldr_path;
  EXPECT_EQ(run({"infer", "--ckpt", (root_ / "run" / "final.ckpt").string(), "--in", ldr.string(),
                 "--out", (root_ / "infer2" / "x.pfm").string(), "--iteration", "3"})
                .code,
            2);
}

TEST_F(CliFixture, ResumeAppendsToLog) {
  const auto dir = root_ / "run_resumed";
  fs::create_directories(dir);
  fs::copy_file(root_ / "run" / "log.csv", dir / "log.csv");
  const auto r = run({"train", "--data", (root_ / "data").string(), "--config",
                      (root_ / "tiny.cfg").string(), "--out", dir.string(), "--epochs", "2",
                      "--seed", "2", "--resume", (root_ / "run" / "final.ckpt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(slurp(dir / "log.csv")), 3);
}

TEST(CliGradcheck, OpsPassAndFaultFails) {
  const auto ok = run({"gradcheck", "--scope", "ops"});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("conv2d_3x3"), std::string::npos);
  const auto bad = run({"gradcheck", "--scope", "ops", "--inject-fault"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("conv2d"), std::string::npos);
}

TEST(CliGradcheck, ModelScopeCoversUnrolledGraph) {
  const auto r = run({"gradcheck", "--scope", "model"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("bptt_n2/input"), std::string::npos);
  EXPECT_NE(r.out.find("bptt_n2/fbb.ddb0.fuse.weight"), std::string::npos);
}

}  // namespace
}  // namespace fhdr
