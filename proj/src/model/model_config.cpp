// SPDX-License-Identifier: Apache-2.0
#include "hrt/model/model_config.hpp"

#include <charconv>
#include <sstream>

#include "hrt/blocks/dropout.hpp"
#include "hrt/errors.hpp"

namespace hrt {

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("model." + key + ": " + what, "model." + key);
}

void check_rate(double rate, const std::string& key) {
  try {
    check_dropout_rate(rate, key);
  } catch (const ConfigError& e) {
    throw ConfigError("model." + key + ": " + e.what(), "model." + key);
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Index parse_index(const std::string& key, const std::string& text) {
  Index v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("model." + key + ": expected an integer, got '" + text + "'", "model." + key);
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("model." + key + ": expected a number, got '" + text + "'", "model." + key);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("model." + key + ": expected true/false, got '" + text + "'", "model." + key);
}

std::vector<Index> parse_list(const std::string& key, std::string text) {
  std::vector<Index> out;
  for (char& c : text) {
    if (c == '[' || c == ']' || c == ',') c = ' ';
  }
  std::istringstream is(text);
  std::string item;
  while (is >> item) out.push_back(parse_index(key, item));
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  require(embed_dim >= 1, "embed_dim", "must be >= 1");
  require(num_heads >= 1, "num_heads", "must be >= 1");
  require(embed_dim % num_heads == 0, "num_heads",
          "embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " + std::to_string(num_heads));
  require(boom_dim >= embed_dim, "boom_dim", "must be >= embed_dim");
  require(vocab_size >= 2, "vocab_size", "must be >= 2");
  require(adaptive_div_factor >= 1, "adaptive_div_factor", "must be >= 1");
  for (std::size_t i = 0; i < adaptive_cutoffs.size(); ++i) {
    require(adaptive_cutoffs[i] >= 1, "adaptive_cutoffs", "cutoffs must be positive");
    require(i == 0 || adaptive_cutoffs[i] > adaptive_cutoffs[i - 1], "adaptive_cutoffs",
            "cutoffs must be strictly increasing");
  }
  if (adaptive()) {
    const auto bounds = cluster_bounds();
    Index dim = embed_dim;
    for (std::size_t k = 1; k + 1 < bounds.size(); ++k) dim /= adaptive_div_factor;
    require(dim >= 1, "adaptive_div_factor", "embed_dim / div_factor^k drops below 1 for the last cluster");
  }
  check_rate(dropout, "dropout");
  check_rate(embedding_rnn_dropout, "embedding_rnn_dropout");
  check_rate(rnn_dropout, "rnn_dropout");
  check_rate(rnn_weight_dropout, "rnn_weight_dropout");
  require(bptt_len >= 1, "bptt_len", "must be >= 1");
  require(train_attn_len >= 1, "train_attn_len", "must be >= 1");
  require(eval_attn_len >= 1, "eval_attn_len", "must be >= 1");
}

bool ModelConfig::adaptive() const { return !adaptive_cutoffs.empty() && vocab_size > adaptive_cutoffs.front(); }

std::vector<Index> ModelConfig::cluster_bounds() const {
  std::vector<Index> bounds{0};
  if (adaptive()) {
    for (Index c : adaptive_cutoffs) {
      if (c >= vocab_size) break;
      bounds.push_back(c);
    }
  }
  bounds.push_back(vocab_size);
  return bounds;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::string cutoffs = "[";
  for (std::size_t i = 0; i < adaptive_cutoffs.size(); ++i) {
    if (i) cutoffs += ", ";
    cutoffs += std::to_string(adaptive_cutoffs[i]);
  }
  cutoffs += "]";
  return {
      {"model.embed_dim", std::to_string(embed_dim)},
      {"model.boom_dim", std::to_string(boom_dim)},
      {"model.num_heads", std::to_string(num_heads)},
      {"model.vocab_size", std::to_string(vocab_size)},
      {"model.adaptive_cutoffs", cutoffs},
      {"model.adaptive_div_factor", std::to_string(adaptive_div_factor)},
      {"model.dropout", format_double(dropout)},
      {"model.embedding_rnn_dropout", format_double(embedding_rnn_dropout)},
      {"model.rnn_dropout", format_double(rnn_dropout)},
      {"model.rnn_weight_dropout", format_double(rnn_weight_dropout)},
      {"model.bptt_len", std::to_string(bptt_len)},
      {"model.train_attn_len", std::to_string(train_attn_len)},
      {"model.eval_attn_len", std::to_string(eval_attn_len)},
      {"model.tie_weights", tie_weights ? "true" : "false"},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& values) {
  ModelConfig c;
  for (const auto& [full_key, value] : values) {
    if (full_key.rfind("model.", 0) != 0) continue;
    const std::string key = full_key.substr(6);
    if (key == "embed_dim") c.embed_dim = parse_index(key, value);
    else if (key == "boom_dim") c.boom_dim = parse_index(key, value);
    else if (key == "num_heads") c.num_heads = parse_index(key, value);
    else if (key == "vocab_size") c.vocab_size = parse_index(key, value);
    else if (key == "adaptive_cutoffs") c.adaptive_cutoffs = parse_list(key, value);
    else if (key == "adaptive_div_factor") c.adaptive_div_factor = parse_index(key, value);
    else if (key == "dropout") c.dropout = parse_double(key, value);
    else if (key == "embedding_rnn_dropout") c.embedding_rnn_dropout = parse_double(key, value);
    else if (key == "rnn_dropout") c.rnn_dropout = parse_double(key, value);
    else if (key == "rnn_weight_dropout") c.rnn_weight_dropout = parse_double(key, value);
    else if (key == "bptt_len") c.bptt_len = parse_index(key, value);
    else if (key == "train_attn_len") c.train_attn_len = parse_index(key, value);
    else if (key == "eval_attn_len") c.eval_attn_len = parse_index(key, value);
    else if (key == "tie_weights") c.tie_weights = parse_bool(key, value);
    else throw ConfigError("unknown key '" + full_key + "'", full_key);
  }
  return c;
}

}  // namespace hrt
