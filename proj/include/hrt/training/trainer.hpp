// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hrt/data/batching.hpp"
#include "hrt/data/corpus.hpp"
#include "hrt/model/checkpoint.hpp"
#include "hrt/model/language_model.hpp"
#include "hrt/training/optimizer.hpp"

namespace hrt {

struct TrainConfig {
  Index total_steps = 1000;
  /// Effective batch: parallel streams per optimizer step.
  Index batch_size = 64;
  /// Streams per forward/backward pass; must divide batch_size.
  Index micro_batch = 32;
  Index valid_every = 500;
  Index checkpoint_every = 500;
  Index log_every = 1;
  Index valid_batch_size = 8;
  /// Targets scored per validation; 0 scores the whole split.
  std::int64_t valid_max_tokens = 0;
  /// Writes 0 for tokens_per_sec so metric logs are reproducible.
  bool deterministic = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MicroStepResult {
  double loss_nats = 0.0;  // summed over counted targets
  Index tokens = 0;
  double lr = 0.0;
  StepReport report;
};

/// One optimizer step over `batch`, run as batch / micro_batch passes over
/// column slices. Gradients are summed with weight 1 / (counted targets of
/// the whole batch), so the step equals a single full-batch pass; `lr` is
/// used for the whole step. Dropout masks are keyed by global column.
template <typename T>
MicroStepResult accumulate_and_step(LanguageModel<T>& model, ModelState<T>& state, AdamW<T>& optimizer,
                                    const StreamBatch& batch, Index micro_batch, double lr, RngKey step_key);

struct MetricRow {
  Index step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_bpc = 0.0;
  std::optional<double> valid_bpc;
  std::optional<double> valid_ppl;
  double tokens_per_sec = 0.0;

  static std::string csv_header();
  std::string csv() const;
};

/// Stateful BPTT loop: one window per step with carried, detached state;
/// periodic validation, checkpointing and CSV metric rows. Files in
/// `output_dir`: metrics.csv and checkpoint.ckpt (latest, replaced
/// atomically).
template <typename T>
class Trainer {
 public:
  Trainer(LanguageModel<T>& model, const Corpus& train, const Corpus* valid, const OptimizerConfig& opt,
          const TrainConfig& cfg, std::filesystem::path output_dir, std::string config_echo = {});

  /// Restores optimizer, carried state and step from `ckpt` (parameters are
  /// loaded too) and truncates metrics.csv to the checkpointed step.
  void resume(const Checkpoint& ckpt);

  /// Runs up to total_steps. Throws NumericalError on a non-finite loss,
  /// leaving the last checkpoint in place.
  std::vector<MetricRow> run();

  Checkpoint snapshot();
  Index step() const { return step_; }
  std::filesystem::path checkpoint_path() const { return output_dir_ / "checkpoint.ckpt"; }
  std::filesystem::path metrics_path() const { return output_dir_ / "metrics.csv"; }

  std::function<void(const MetricRow&)> on_row;
  std::function<void(const std::string&)> on_warning;

 private:
  StreamBatch window(Index step) const;
  void write_row(const MetricRow& row);

  LanguageModel<T>& model_;
  const Corpus& train_;
  const Corpus* valid_;
  OptimizerConfig opt_cfg_;
  TrainConfig cfg_;
  std::filesystem::path output_dir_;
  std::string config_echo_;
  AdamW<T> optimizer_;
  ModelState<T> state_;
  Index step_ = 0;
  std::optional<StreamBatcher> stream_;
  std::vector<StreamBatch> article_batches_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace hrt
