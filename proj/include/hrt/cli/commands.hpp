// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "hrt/cli/run_config.hpp"
#include "hrt/data/corpus.hpp"

namespace hrt {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitIo = 3, kExitNumerical = 4 };

/// Runs `body`, reporting library errors on `err` and mapping them to exit
/// codes: ConfigError/ParseError 2, DataError/CheckpointError/filesystem 3,
/// NumericalError 4.
int run_guarded(std::ostream& err, const std::function<int()>& body);

/// Loads train/valid/test as described by `data`. With `vocab` the text is
/// encoded against it instead of building a vocabulary from train.
CorpusSplits load_splits(const DataConfig& data, std::shared_ptr<const Vocabulary> vocab = nullptr);

/// Trains per `cfg`, writing config.echo, metrics.csv and checkpoint.ckpt
/// under run.output_dir. With `resume`, continues from an existing
/// checkpoint there.
int cmd_train(RunConfig cfg, bool resume, std::ostream& out, std::ostream& err);

struct EvaluateArgs {
  std::filesystem::path checkpoint;
  /// Replaces data.path from the checkpoint's configuration.
  std::optional<std::filesystem::path> data;
  std::string split = "test";
  Index attn_length = 0;
  Index batch_size = 1;
  std::int64_t max_tokens = 0;
  std::optional<std::filesystem::path> dump;
  bool csv = false;
};
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

/// Per-block, total and non-embedding parameter counts.
int cmd_params(const std::string& architecture, const ModelConfig& model, std::ostream& out, std::ostream& err);

/// Learning-rate curve, one row per step 0..total.
int cmd_schedule(Index total, double start_lr, double peak_lr, double final_lr, bool csv, std::ostream& out,
                 std::ostream& err);

}  // namespace hrt
