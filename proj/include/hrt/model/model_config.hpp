// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "hrt/tensor.hpp"

namespace hrt {

struct ModelConfig {
  Index embed_dim = 512;
  Index boom_dim = 2048;
  Index num_heads = 8;
  Index vocab_size = 264;
  std::vector<Index> adaptive_cutoffs{20000, 40000, 200000};
  Index adaptive_div_factor = 4;
  double dropout = 0.13;
  double embedding_rnn_dropout = 0.3;
  double rnn_dropout = 0.16;
  double rnn_weight_dropout = 0.3;
  Index bptt_len = 512;
  Index train_attn_len = 768;
  Index eval_attn_len = 2048;
  bool tie_weights = true;

  /// Throws ConfigError naming the offending key (prefixed "model.").
  void validate() const;

  /// Adaptive embedding/softmax is used only when the vocabulary extends
  /// past the first cutoff.
  bool adaptive() const;

  /// Cluster boundaries [0, c_0, ..., vocab_size] after clamping cutoffs to
  /// the vocabulary; a single cluster when not adaptive.
  std::vector<Index> cluster_bounds() const;

  /// Flat "model.key" -> value strings, parseable by from_map.
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& values);
};

}  // namespace hrt
