// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fhdr/parallel.hpp"

namespace fhdr {

namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::vector<double> widen(const Tensor<T>& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

}  // namespace

// ------------------------------------------------------------ config

void TrainConfig::validate() const {
  auto fail = [&](const std::string& what) { throw ContractError("train config: " + what); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (decay_start_epoch <= 0 || decay_start_epoch > epochs) {
    fail("decay_start_epoch must be in (0, epochs], got " + std::to_string(decay_start_epoch));
  }
  if (!(lr0 > 0.0)) fail("lr0 must be positive");
  if (!(lr_floor >= 0.0)) fail("lr_floor must be nonnegative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0,1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (iterations < 1) fail("iterations must be >= 1");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be nonnegative");
  if (checkpoint_every < 0) fail("checkpoint_every must be nonnegative");
  model_config().validate();
  loss.validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m = model;
  m.iterations = iterations;
  return m;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw ContractError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                        std::to_string(cfg.epochs) + ")");
  }
  if (epoch < cfg.decay_start_epoch) return cfg.lr0;
  const double frac = static_cast<double>(cfg.epochs - epoch) /
                      static_cast<double>(cfg.epochs - cfg.decay_start_epoch);
  return std::max(cfg.lr_floor, cfg.lr0 * frac);
}

// ------------------------------------------------------------ adam

NonFiniteGradientError::NonFiniteGradientError(std::string name)
    : std::runtime_error("adam: non-finite gradient in parameter " + name),
      parameter(std::move(name)) {}

template <typename T>
AdamMoments<T> AdamMoments<T>::zeros_like(
    std::span<const std::pair<std::string, Tensor<T>>> params) {
  AdamMoments out;
  for (const auto& [name, p] : params) {
    out.m.push_back(Tensor<T>::zeros(p.shape()));
    out.v.push_back(Tensor<T>::zeros(p.shape()));
  }
  return out;
}

template <typename T>
void adam_step(std::span<const std::pair<std::string, Tensor<T>>> params, AdamMoments<T>& moments,
               double lr, const AdamHyper& hyper) {
  if (moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw ContractError("adam: moments do not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (!(moments.m[i].shape() == p.shape()) || !(moments.v[i].shape() == p.shape())) {
      throw ContractError("adam: moment shape mismatch for " + name);
    }
    if (!p.has_grad()) continue;
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) throw NonFiniteGradientError(name);
    }
  }
  const std::int64_t t = ++moments.step;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].second;
    auto w = p.mutable_data();
    auto m = moments.m[i].mutable_data();
    auto v = moments.v[i].mutable_data();
    const bool has = p.has_grad();
    std::span<const T> grad = has ? p.grad() : std::span<const T>{};
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = has ? static_cast<double>(grad[k]) : 0.0;
      const double mk = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
      const double vk = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + hyper.eps);
      w[k] = static_cast<T>(w[k] - update);
    }
  }
}

template <typename T>
double clip_gradients(std::span<const std::pair<std::string, Tensor<T>>> params,
                      double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (const auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad_buffer()) g *= factor;
    }
  }
  return norm;
}

// ------------------------------------------------------------ state

template <typename T>
CheckpointFile TrainState<T>::to_checkpoint() const {
  CheckpointFile file;
  file.config = params.config;
  append_params(file, params);
  const auto named = params.named_parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    file.records.push_back(TensorRecord::from_tensor("adam/m/" + named[i].first, adam.m[i]));
    file.records.push_back(TensorRecord::from_tensor("adam/v/" + named[i].first, adam.v[i]));
  }
  const std::int64_t counters[] = {adam.step, epoch, batch, std::bit_cast<std::int64_t>(shuffle_seed)};
  const double accum[] = {epoch_loss_sum, epoch_psnr_sum, epoch_seconds, best_psnr};
  file.records.push_back(TensorRecord::from_i64("train/counters", counters));
  file.records.push_back(TensorRecord::from_f64("train/accumulators", accum));
  return file;
}

template <typename T>
TrainState<T> TrainState<T>::from_checkpoint(const CheckpointFile& file,
                                             const ModelConfig& expected) {
  require_config(file, expected);
  TrainState state;
  state.params = params_from_checkpoint<T>(file);
  const auto named = state.params.named_parameters();
  state.adam = AdamMoments<T>::zeros_like(named);
  for (std::size_t i = 0; i < named.size(); ++i) {
    for (auto [prefix, dst] : {std::pair{"adam/m/", &state.adam.m[i]},
                               std::pair{"adam/v/", &state.adam.v[i]}}) {
      const Tensor<T> stored = file.get(prefix + named[i].first).template to_tensor<T>();
      if (!(stored.shape() == dst->shape())) {
        throw ContractError(std::string("checkpoint: bad shape for ") + prefix + named[i].first);
      }
      *dst = stored;
    }
  }
  const auto counters = file.get("train/counters").to_i64();
  const auto accum = file.get("train/accumulators").to_f64();
  if (counters.size() != 4 || accum.size() != 4) {
    throw ContractError("checkpoint: malformed training counters");
  }
  state.adam.step = counters[0];
  state.epoch = static_cast<int>(counters[1]);
  state.batch = counters[2];
  state.shuffle_seed = std::bit_cast<std::uint64_t>(counters[3]);
  state.epoch_loss_sum = accum[0];
  state.epoch_psnr_sum = accum[1];
  state.epoch_seconds = accum[2];
  state.best_psnr = accum[3];
  return state;
}

std::string epoch_log_header() { return "epoch,mean_loss,lr,seconds\n"; }

std::string epoch_log_row(const EpochLog& row) {
  return std::to_string(row.epoch) + "," + fmt17(row.mean_loss) + "," + fmt17(row.lr) + "," +
         fmt17(row.seconds) + "\n";
}

TrainingHalted::TrainingHalted(const std::string& what, CheckpointFile d)
    : std::runtime_error(what), diagnostic(std::move(d)) {}

// ------------------------------------------------------------ trainer

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg, const std::vector<ImagePair>& data,
                    PerceptualExtractor<T> extractor)
    : cfg_(std::move(cfg)), data_(&data), extractor_(std::move(extractor)) {
  cfg_.validate();
  if (data.empty()) throw ContractError("trainer: empty dataset");
  state_.params = FhdrParams<T>::init(cfg_.model_config(), derive_seed(cfg_.seed, 1));
  state_.shuffle_seed = derive_seed(cfg_.seed, 2);
  named_ = state_.params.named_parameters();
  state_.adam = AdamMoments<T>::zeros_like(named_);
}

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg, const std::vector<ImagePair>& data, TrainState<T> state,
                    PerceptualExtractor<T> extractor)
    : cfg_(std::move(cfg)), data_(&data), extractor_(std::move(extractor)) {
  cfg_.validate();
  if (data.empty()) throw ContractError("trainer: empty dataset");
  // deep copy so the caller's tensors are never updated in place
  state_ = TrainState<T>::from_checkpoint(state.to_checkpoint(), cfg_.model_config());
  named_ = state_.params.named_parameters();
}

template <typename T>
void Trainer<T>::init_iterator() {
  iterator_.emplace(*data_, cfg_.batch_size, state_.shuffle_seed, state_.epoch);
  if (state_.batch < 0 || static_cast<std::size_t>(state_.batch) >= iterator_->batch_count()) {
    throw ContractError("trainer: resume position " + std::to_string(state_.batch) +
                        " is outside the epoch");
  }
  iterator_->skip(static_cast<std::size_t>(state_.batch));
}

template <typename T>
double Trainer<T>::batch_loss(const Batch<T>& batch) const {
  Graph<T> g(false);
  const auto outs = fhdr_forward(g, batch.ldr, state_.params, cfg_.iterations);
  return static_cast<double>(loss_total<T>(g, outs, batch.hdr, extractor_, cfg_.loss).item());
}

template <typename T>
StepResult Trainer<T>::step() {
  if (finished()) throw ContractError("trainer: all epochs already completed");
  if (!iterator_) init_iterator();
  const auto start = std::chrono::steady_clock::now();
  const double lr = lr_schedule(state_.epoch, cfg_);

  auto batch = iterator_->next();
  Graph<T> g;
  const auto outs = fhdr_forward(g, batch->ldr, state_.params, cfg_.iterations);
  const Tensor<T> loss = loss_total<T>(g, outs, batch->hdr, extractor_, cfg_.loss);
  StepResult result;
  result.loss = static_cast<double>(loss.item());
  if (!std::isfinite(result.loss)) {
    throw TrainingHalted("training halted: non-finite loss at epoch " +
                             std::to_string(state_.epoch) + " batch " +
                             std::to_string(state_.batch),
                         state_.to_checkpoint());
  }
  for (const auto& [name, p] : named_) p.clear_grad();
  g.backward(loss);
  if (cfg_.grad_clip > 0.0) clip_gradients<T>(named_, cfg_.grad_clip);
  try {
    adam_step<T>(named_, state_.adam, lr,
                 AdamHyper{cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps});
  } catch (const NonFiniteGradientError& e) {
    throw TrainingHalted(std::string("training halted: ") + e.what(), state_.to_checkpoint());
  }
  result.psnr = psnr_tonemapped(widen(outs.back()), widen(batch->hdr), cfg_.loss.mu);

  state_.epoch_loss_sum += result.loss;
  state_.epoch_psnr_sum += result.psnr;
  ++state_.batch;
  state_.epoch_seconds +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (static_cast<std::size_t>(state_.batch) == iterator_->batch_count()) {
    EpochLog log;
    log.epoch = state_.epoch;
    log.mean_loss = state_.epoch_loss_sum / static_cast<double>(state_.batch);
    log.mean_psnr = state_.epoch_psnr_sum / static_cast<double>(state_.batch);
    log.lr = lr;
    log.seconds = state_.epoch_seconds;
    state_.best_psnr = std::max(state_.best_psnr, log.mean_psnr);
    ++state_.epoch;
    state_.batch = 0;
    state_.epoch_loss_sum = state_.epoch_psnr_sum = state_.epoch_seconds = 0.0;
    iterator_.reset();
    result.epoch_done = log;
  }
  return result;
}

template <typename T>
EpochLog Trainer<T>::run_epoch() {
  for (;;) {
    StepResult r = step();
    if (r.epoch_done) return *r.epoch_done;
  }
}

// ------------------------------------------------------------ driver

TrainResult train(const TrainConfig& cfg, const std::vector<ImagePair>& data,
                  const TrainRunOptions& options, std::optional<TrainState<float>> resume_from,
                  PerceptualExtractor<float> extractor) {
  cfg.validate();
  fs::create_directories(options.out_dir);
  std::optional<Trainer<float>> trainer;
  if (resume_from) {
    trainer.emplace(cfg, data, std::move(*resume_from), std::move(extractor));
  } else {
    trainer.emplace(cfg, data, std::move(extractor));
  }

  const fs::path log_path = options.out_dir / "log.csv";
  const bool append = options.resume && fs::exists(log_path);
  std::ofstream log_file(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log_file) throw std::runtime_error("train: cannot open " + log_path.string());
  if (!append) log_file << epoch_log_header();

  TrainResult result;
  while (!trainer->finished()) {
    const double best_before = trainer->state().best_psnr;
    EpochLog row;
    try {
      row = trainer->run_epoch();
    } catch (const TrainingHalted& halt) {
      write_checkpoint(options.out_dir / "diagnostic.ckpt", halt.diagnostic);
      throw;
    }
    log_file << epoch_log_row(row) << std::flush;
    result.log.push_back(row);

    const CheckpointFile ckpt = trainer->state().to_checkpoint();
    if (row.mean_psnr > best_before) write_checkpoint(options.out_dir / "best.ckpt", ckpt);
    const int done = row.epoch + 1;
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      write_checkpoint(options.out_dir / ("epoch_" + std::to_string(done) + ".ckpt"), ckpt);
    }
    if (options.on_epoch) options.on_epoch(row);
  }
  write_checkpoint(options.out_dir / "final.ckpt", trainer->state().to_checkpoint());
  result.final_state = trainer->state();
  return result;
}

// ------------------------------------------------------------ evaluation

template <typename T>
std::vector<ImageHDR> predict(const FhdrParams<T>& params, const ImageLDR& ldr, int iterations) {
  Graph<T> g(false);
  const auto outs = fhdr_forward(g, ldr_to_tensor<T>({&ldr}), params, iterations);
  std::vector<ImageHDR> images;
  for (const auto& o : outs) images.push_back(tensor_to_hdr(o, 0));
  return images;
}

MetricReport evaluate(const Predictor& predictor, const std::vector<ImagePair>& data, double mu,
                      std::vector<std::string>* errors) {
  std::vector<std::vector<MetricRow>> rows(data.size());
  std::vector<std::string> failures(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const ImagePair& pair = data[i];
    try {
      const auto outputs = predictor(pair.ldr);
      if (outputs.empty()) throw ContractError("predictor returned no images");
      for (std::size_t t = 0; t < outputs.size(); ++t) {
        MetricRow row;
        row.image_id = pair.id;
        row.iteration = static_cast<int>(t) + 1;
        row.psnr_db = psnr_tonemapped(outputs[t], pair.hdr, mu);
        row.ssim = ssim_tonemapped(outputs[t], pair.hdr, mu);
        rows[i].push_back(row);
      }
    } catch (const std::exception& e) {
      rows[i].clear();
      failures[i] = pair.id + ": " + e.what();
    }
  });
  MetricReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!failures[i].empty()) {
      if (errors != nullptr) errors->push_back(failures[i]);
      continue;
    }
    report.rows.insert(report.rows.end(), rows[i].begin(), rows[i].end());
  }
  report.summarize();
  return report;
}

template <typename T>
MetricReport evaluate(const FhdrParams<T>& params, int iterations,
                      const std::vector<ImagePair>& data, double mu,
                      std::vector<std::string>* errors) {
  return evaluate([&](const ImageLDR& ldr) { return predict(params, ldr, iterations); }, data, mu,
                  errors);
}

std::string AblationResult::csv() const {
  std::string out = "epoch,n,psnr\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.iterations) + "," + fmt17(r.psnr) +
           "\n";
  }
  return out;
}

AblationResult ablate_iterations(const TrainConfig& base, const std::vector<ImagePair>& train_data,
                                 const std::vector<ImagePair>& eval_data, std::vector<int> n_list) {
  if (n_list.empty()) throw ContractError("ablate_iterations: empty n list");
  AblationResult result;
  for (int n : n_list) {
    TrainConfig cfg = base;
    cfg.iterations = n;
    Trainer<float> trainer(cfg, train_data);
    result.param_counts.emplace_back(n, trainer.params().scalar_count());
    while (!trainer.finished()) {
      const EpochLog log = trainer.run_epoch();
      const MetricReport report = evaluate(trainer.params(), n, eval_data, cfg.loss.mu);
      double psnr = std::nan("");
      for (const auto& m : report.means) {
        if (m.iteration == n) psnr = m.psnr_db;
      }
      result.rows.push_back(AblationRow{log.epoch, n, psnr});
    }
  }
  return result;
}

// ------------------------------------------------------------ instantiations

#define FHDR_INSTANTIATE_TRAINING(T)                                                           \
  template struct AdamMoments<T>;                                                              \
  template struct TrainState<T>;                                                               \
  template class Trainer<T>;                                                                   \
  template void adam_step(std::span<const std::pair<std::string, Tensor<T>>>, AdamMoments<T>&, \
                          double, const AdamHyper&);                                           \
  template double clip_gradients(std::span<const std::pair<std::string, Tensor<T>>>, double);  \
  template std::vector<ImageHDR> predict(const FhdrParams<T>&, const ImageLDR&, int);          \
  template MetricReport evaluate(const FhdrParams<T>&, int, const std::vector<ImagePair>&,     \
                                 double, std::vector<std::string>*);

FHDR_INSTANTIATE_TRAINING(float)
FHDR_INSTANTIATE_TRAINING(double)

#undef FHDR_INSTANTIATE_TRAINING

}  // namespace fhdr
