// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hrt/data/corpus.hpp"
#include "hrt/model/model_config.hpp"
#include "hrt/training/optimizer.hpp"
#include "hrt/training/trainer.hpp"

namespace hrt {

using ConfigMap = std::map<std::string, std::string>;

/// Where the text comes from. `path` is a file for char and byte level; for
/// word level a directory holding {train,valid,test}.txt (or
/// wiki.{train,valid,test}.tokens); for subword level a directory holding
/// {train,valid,test}.ids plus vocab.txt.
struct DataConfig {
  std::filesystem::path path;
  TokenLevel level = TokenLevel::Byte;
  std::array<double, 3> split{0.90, 0.05, 0.05};
  std::string article_marker;
};

/// Everything a run needs. model.vocab_size is resolved from the data when
/// a run starts.
struct RunConfig {
  std::string architecture;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::filesystem::path output_dir = "runs/default";
  std::string precision = "float";
  DataConfig data;
  ModelConfig model;
  OptimizerConfig optimizer;
  TrainConfig training;

  /// Applies "section.key" values over the current ones; unknown keys and
  /// malformed values throw ConfigError naming the key.
  void apply(const ConfigMap& values);
  ConfigMap to_map() const;
  /// Sectioned "key = value" text; parse_config_text(echo()) round-trips.
  std::string echo() const;
  /// Checks every section, the architecture string, an explicit seed and
  /// that data.path exists.
  void validate() const;

  static RunConfig from_map(const ConfigMap& values);
};

/// Parses the flat config format: "[section]" headers, "key = value" lines,
/// '#' comments. Keys come back as "section.key".
ConfigMap parse_config_text(std::string_view text);

/// Splits "key=value" (as given to --set).
std::pair<std::string, std::string> parse_override(std::string_view text);

struct KeyDoc {
  std::string key;
  std::string help;
};
/// Every accepted key with a one-line description.
const std::vector<KeyDoc>& config_keys();

/// Named bundled configurations.
const std::map<std::string, std::string>& presets();
std::string preset_text(const std::string& name);

}  // namespace hrt
