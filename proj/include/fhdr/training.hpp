// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fhdr/checkpoint.hpp"
#include "fhdr/data.hpp"
#include "fhdr/losses.hpp"
#include "fhdr/metrics.hpp"
#include "fhdr/model.hpp"

namespace fhdr {

struct TrainConfig {
  ModelConfig model;  // model.iterations is overridden by `iterations`
  int epochs = 200;
  double lr0 = 2e-4;
  int decay_start_epoch = 100;
  double lr_floor = 0.0;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int iterations = 4;
  std::uint64_t seed = 0;
  LossConfig loss;
  /// Global gradient-norm limit; 0 disables clipping.
  double grad_clip = 0.0;
  int checkpoint_every = 10;

  /// Throws ContractError.
  void validate() const;
  /// model with iterations set from this config.
  [[nodiscard]] ModelConfig model_config() const;
};

/// Constant lr0 before decay_start_epoch, then linear towards 0 at `epochs`,
/// never below lr_floor.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(std::string parameter);
  std::string parameter;
};

/// First and second moments, one per parameter, plus the step counter.
template <typename T>
struct AdamMoments {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  static AdamMoments zeros_like(std::span<const std::pair<std::string, Tensor<T>>> params);
};

/// One bias-corrected Adam update using each parameter's gradient buffer
/// (absent buffers count as zero). Every gradient is checked before any
/// parameter changes; a NaN or Inf aborts the step.
template <typename T>
void adam_step(std::span<const std::pair<std::string, Tensor<T>>> params, AdamMoments<T>& moments,
               double lr, const AdamHyper& hyper);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before scaling.
template <typename T>
double clip_gradients(std::span<const std::pair<std::string, Tensor<T>>> params, double max_norm);

/// Everything needed to continue a run exactly where it stopped.
template <typename T>
struct TrainState {
  FhdrParams<T> params;
  AdamMoments<T> adam;
  int epoch = 0;
  std::int64_t batch = 0;  // batches already consumed in `epoch`
  std::uint64_t shuffle_seed = 0;
  double epoch_loss_sum = 0.0;
  double epoch_psnr_sum = 0.0;
  double epoch_seconds = 0.0;
  double best_psnr = -std::numeric_limits<double>::infinity();

  [[nodiscard]] CheckpointFile to_checkpoint() const;
  /// Throws ConfigMismatchError when `expected` differs from the stored config.
  static TrainState from_checkpoint(const CheckpointFile& file, const ModelConfig& expected);
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  double mean_psnr = 0.0;  // last-iteration tonemapped PSNR on training batches
};

std::string epoch_log_header();
std::string epoch_log_row(const EpochLog& row);

struct StepResult {
  double loss = 0.0;
  double psnr = 0.0;
  std::optional<EpochLog> epoch_done;
};

/// Loss was NaN or Inf; carries the state from before the failing step.
class TrainingHalted : public std::runtime_error {
 public:
  TrainingHalted(const std::string& what, CheckpointFile diagnostic);
  CheckpointFile diagnostic;
};

/// Owns the model and optimizer state of one run. Not thread-safe.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, const std::vector<ImagePair>& data,
          PerceptualExtractor<T> extractor = PerceptualExtractor<T>());
  /// Continues from a saved state; the data order picks up at state.batch.
  Trainer(TrainConfig cfg, const std::vector<ImagePair>& data, TrainState<T> state,
          PerceptualExtractor<T> extractor = PerceptualExtractor<T>());

  /// Forward over all iterations, total loss, full backward through time,
  /// one Adam update.
  StepResult step();
  /// Runs the remaining batches of the current epoch.
  EpochLog run_epoch();

  [[nodiscard]] bool finished() const { return state_.epoch >= cfg_.epochs; }
  [[nodiscard]] const TrainState<T>& state() const { return state_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] const FhdrParams<T>& params() const { return state_.params; }
  [[nodiscard]] std::int64_t steps() const { return state_.adam.step; }

  /// Loss of the current parameters on one batch, without updating anything.
  [[nodiscard]] double batch_loss(const Batch<T>& batch) const;

 private:
  void init_iterator();

  TrainConfig cfg_;
  const std::vector<ImagePair>* data_;
  PerceptualExtractor<T> extractor_;
  TrainState<T> state_;
  std::vector<std::pair<std::string, Tensor<T>>> named_;
  std::optional<BatchIterator<T>> iterator_;
};

struct TrainRunOptions {
  std::filesystem::path out_dir;
  /// Appended to an existing log.csv when resuming.
  bool resume = false;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  TrainState<float> final_state;
};

/// Full training run in single precision. Writes log.csv, epoch_<k>.ckpt
/// every checkpoint_every epochs, best.ckpt on a new best training PSNR and
/// final.ckpt. A non-finite loss writes diagnostic.ckpt and rethrows.
TrainResult train(const TrainConfig& cfg, const std::vector<ImagePair>& data,
                  const TrainRunOptions& options,
                  std::optional<TrainState<float>> resume_from = std::nullopt,
                  PerceptualExtractor<float> extractor = PerceptualExtractor<float>());

/// One HDR image per feedback iteration.
template <typename T>
std::vector<ImageHDR> predict(const FhdrParams<T>& params, const ImageLDR& ldr, int iterations);

using Predictor = std::function<std::vector<ImageHDR>(const ImageLDR&)>;

/// PSNR/SSIM of every iteration's output for every pair (rows ordered by
/// pair, then iteration) plus per-iteration means. Items that fail are
/// reported in `errors` and skipped.
MetricReport evaluate(const Predictor& predictor, const std::vector<ImagePair>& data, double mu,
                      std::vector<std::string>* errors = nullptr);

template <typename T>
MetricReport evaluate(const FhdrParams<T>& params, int iterations,
                      const std::vector<ImagePair>& data, double mu,
                      std::vector<std::string>* errors = nullptr);

struct AblationRow {
  int epoch = 0;
  int iterations = 0;
  double psnr = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<std::pair<int, std::size_t>> param_counts;  // (n, scalars)

  /// epoch,n,psnr
  [[nodiscard]] std::string csv() const;
};

/// Trains one model per n with the same seed and data order and records the
/// mean PSNR of the n-th output on `eval_data` after every epoch.
AblationResult ablate_iterations(const TrainConfig& base, const std::vector<ImagePair>& train_data,
                                 const std::vector<ImagePair>& eval_data,
                                 std::vector<int> n_list = {1, 2, 3, 4});

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace fhdr
