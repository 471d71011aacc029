// SPDX-License-Identifier: Apache-2.0
#include "hrt/cli/run_config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "hrt/errors.hpp"
#include "hrt/model/architecture.hpp"

namespace hrt {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'", key);
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'", key);
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + text + "'", key);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'", key);
}

std::array<double, 3> parse_split(const std::string& key, std::string text) {
  for (char& c : text) {
    if (c == '[' || c == ']' || c == ',') c = ' ';
  }
  std::istringstream is(text);
  std::vector<double> v;
  std::string item;
  while (is >> item) v.push_back(parse_double(key, item));
  if (v.size() != 3) throw ConfigError(key + ": expected three proportions", key);
  return {v[0], v[1], v[2]};
}

struct Field {
  std::string key;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Member>
Field int_field(std::string key, std::string help, Member member) {
  return {key, std::move(help), [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_int(key, v); }};
}

template <typename Member>
Field double_field(std::string key, std::string help, Member member) {
  return {key, std::move(help), [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
          [member, key](RunConfig& c, const std::string& v) { member(c) = parse_double(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"run.architecture", "block string, e.g. (|q|qf)+4x(afff)+3x(f)",
                 [](const RunConfig& c) { return c.architecture; },
                 [](RunConfig& c, const std::string& v) { c.architecture = v; }});
    f.push_back({"run.seed", "seed for initialization and dropout (required)",
                 [](const RunConfig& c) { return c.seed_set ? std::to_string(c.seed) : std::string(); },
                 [](RunConfig& c, const std::string& v) {
                   c.seed = parse_uint("run.seed", v);
                   c.seed_set = true;
                 }});
    f.push_back({"run.output_dir", "directory for metrics.csv, checkpoint.ckpt and config.echo",
                 [](const RunConfig& c) { return c.output_dir.string(); },
                 [](RunConfig& c, const std::string& v) { c.output_dir = v; }});
    f.push_back({"run.precision", "float or double",
                 [](const RunConfig& c) { return c.precision; },
                 [](RunConfig& c, const std::string& v) { c.precision = v; }});
    f.push_back({"data.path", "corpus file (char, byte) or directory (word, subword)",
                 [](const RunConfig& c) { return c.data.path.string(); },
                 [](RunConfig& c, const std::string& v) { c.data.path = v; }});
    f.push_back({"data.level", "char, byte, word or subword",
                 [](const RunConfig& c) { return std::string(to_string(c.data.level)); },
                 [](RunConfig& c, const std::string& v) { c.data.level = parse_token_level(v); }});
    f.push_back({"data.split", "train/valid/test byte proportions for single-file corpora",
                 [](const RunConfig& c) {
                   return format_double(c.data.split[0]) + ", " + format_double(c.data.split[1]) + ", " +
                          format_double(c.data.split[2]);
                 },
                 [](RunConfig& c, const std::string& v) { c.data.split = parse_split("data.split", v); }});
    f.push_back({"data.article_marker", "word level: a line equal to this starts a new article",
                 [](const RunConfig& c) { return c.data.article_marker; },
                 [](RunConfig& c, const std::string& v) { c.data.article_marker = v; }});

    f.push_back(double_field("optimizer.peak_lr", "one-cycle peak learning rate",
                             [](RunConfig& c) -> double& { return c.optimizer.peak_lr; }));
    f.push_back(double_field("optimizer.start_lr", "one-cycle start learning rate",
                             [](RunConfig& c) -> double& { return c.optimizer.start_lr; }));
    f.push_back(double_field("optimizer.final_lr", "one-cycle final learning rate",
                             [](RunConfig& c) -> double& { return c.optimizer.final_lr; }));
    f.push_back(double_field("optimizer.weight_decay", "decoupled AdamW weight decay",
                             [](RunConfig& c) -> double& { return c.optimizer.weight_decay; }));
    f.push_back(double_field("optimizer.beta1", "Adam first-moment decay",
                             [](RunConfig& c) -> double& { return c.optimizer.beta1; }));
    f.push_back(double_field("optimizer.beta2", "Adam second-moment decay",
                             [](RunConfig& c) -> double& { return c.optimizer.beta2; }));
    f.push_back(double_field("optimizer.epsilon", "Adam epsilon",
                             [](RunConfig& c) -> double& { return c.optimizer.epsilon; }));
    f.push_back(double_field("optimizer.grad_clip", "global gradient-norm clip, <= 0 disables",
                             [](RunConfig& c) -> double& { return c.optimizer.grad_clip; }));

    f.push_back(int_field("training.total_steps", "optimizer steps (effective batches)",
                          [](RunConfig& c) -> Index& { return c.training.total_steps; }));
    f.push_back(int_field("training.batch_size", "effective batch: parallel streams per step",
                          [](RunConfig& c) -> Index& { return c.training.batch_size; }));
    f.push_back(int_field("training.micro_batch", "streams per forward/backward pass",
                          [](RunConfig& c) -> Index& { return c.training.micro_batch; }));
    f.push_back(int_field("training.valid_every", "steps between validations",
                          [](RunConfig& c) -> Index& { return c.training.valid_every; }));
    f.push_back(int_field("training.checkpoint_every", "steps between checkpoints",
                          [](RunConfig& c) -> Index& { return c.training.checkpoint_every; }));
    f.push_back(int_field("training.log_every", "steps between metric rows",
                          [](RunConfig& c) -> Index& { return c.training.log_every; }));
    f.push_back(int_field("training.valid_batch_size", "streams used for validation",
                          [](RunConfig& c) -> Index& { return c.training.valid_batch_size; }));
    f.push_back(int_field("training.valid_max_tokens", "validation targets per check, 0 for all",
                          [](RunConfig& c) -> std::int64_t& { return c.training.valid_max_tokens; }));
    f.push_back({"training.deterministic", "write tokens_per_sec as 0 so logs are reproducible",
                 [](const RunConfig& c) { return std::string(c.training.deterministic ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) {
                   c.training.deterministic = parse_bool("training.deterministic", v);
                 }});
    return f;
  }();
  return table;
}

const std::map<std::string, std::string>& model_help() {
  static const std::map<std::string, std::string> help{
      {"model.embed_dim", "embedding and residual width"},
      {"model.boom_dim", "feed-forward hidden width"},
      {"model.num_heads", "attention heads"},
      {"model.vocab_size", "resolved from the data at run time"},
      {"model.adaptive_cutoffs", "adaptive cluster cutoffs, e.g. [20000, 40000, 200000]"},
      {"model.adaptive_div_factor", "embedding width divisor per cluster"},
      {"model.dropout", "attention/feed-forward dropout"},
      {"model.embedding_rnn_dropout", "RNN-dropout after the embedding"},
      {"model.rnn_dropout", "RNN-dropout before later QRNN layers"},
      {"model.rnn_weight_dropout", "DropConnect on QRNN gate weights"},
      {"model.bptt_len", "tokens per training window"},
      {"model.train_attn_len", "attention length while training"},
      {"model.eval_attn_len", "attention length while evaluating"},
      {"model.tie_weights", "share embedding and output tables"},
  };
  return help;
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out[section.empty() ? key : section + "." + key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

std::pair<std::string, std::string> parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(text) + "' is not key=value");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

void RunConfig::apply(const ConfigMap& values) {
  ConfigMap model_values = model.to_map();
  bool model_changed = false;
  for (const auto& [key, value] : values) {
    if (key.rfind("model.", 0) == 0) {
      if (!model_values.count(key)) throw ConfigError("unknown key '" + key + "'", key);
      model_values[key] = value;
      model_changed = true;
      continue;
    }
    bool found = false;
    for (const auto& f : fields()) {
      if (f.key == key) {
        f.set(*this, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown key '" + key + "'", key);
  }
  if (model_changed) model = ModelConfig::from_map(model_values);
  training.seed = seed;
}

ConfigMap RunConfig::to_map() const {
  ConfigMap out = model.to_map();
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  return out;
}

std::string RunConfig::echo() const {
  const ConfigMap values = to_map();
  std::string out;
  for (const char* section : {"run", "data", "model", "optimizer", "training"}) {
    out += std::string("[") + section + "]\n";
    const std::string prefix = std::string(section) + ".";
    for (const auto& [key, value] : values) {
      if (key.rfind(prefix, 0) == 0) out += key.substr(prefix.size()) + " = " + value + "\n";
    }
    out += "\n";
  }
  return out;
}

void RunConfig::validate() const {
  if (architecture.empty()) throw ConfigError("run.architecture is required", "run.architecture");
  try {
    parse_architecture(architecture);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("run.architecture: ") + e.what(), "run.architecture");
  }
  if (!seed_set) throw ConfigError("run.seed must be set explicitly", "run.seed");
  if (precision != "float" && precision != "double") {
    throw ConfigError("run.precision must be float or double, got '" + precision + "'", "run.precision");
  }
  if (output_dir.empty()) throw ConfigError("run.output_dir is required", "run.output_dir");
  if (data.path.empty()) throw ConfigError("data.path is required", "data.path");
  if (!std::filesystem::exists(data.path)) {
    throw ConfigError("data.path '" + data.path.string() + "' does not exist", "data.path");
  }
  model.validate();
  optimizer.validate();
  training.validate();
}

RunConfig RunConfig::from_map(const ConfigMap& values) {
  RunConfig c;
  c.apply(values);
  return c;
}

const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> docs = [] {
    std::vector<KeyDoc> d;
    for (const auto& f : fields()) d.push_back({f.key, f.help});
    for (const auto& [key, help] : model_help()) d.push_back({key, help});
    return d;
  }();
  return docs;
}

namespace {

std::string full_preset(std::string_view arch_text, bool attn_qrnn, bool par, bool wt103, const std::string& steps) {
  const std::string arch(arch_text);
  std::string s = "[run]\narchitecture = " + arch + "\nseed = 1\noutput_dir = runs/" +
                  (attn_qrnn ? "attn-qrnn" : par ? "par" : "hybrid") + (wt103 ? "-wt103" : "-enwik8") +
                  "\nprecision = float\n\n[data]\n";
  s += wt103 ? "path = data/wikitext-103\nlevel = word\n" : "path = data/enwik8\nlevel = byte\nsplit = 0.9, 0.05, 0.05\n";
  s += "\n[model]\n";
  s += attn_qrnn ? "embed_dim = 768\nboom_dim = 3072\nnum_heads = 12\n" : "embed_dim = 512\nboom_dim = 2048\nnum_heads = 8\n";
  s += "adaptive_cutoffs = [20000, 40000, 200000]\nadaptive_div_factor = 4\n";
  s += attn_qrnn ? "dropout = 0.15\nembedding_rnn_dropout = 0.35\nrnn_dropout = 0.15\nrnn_weight_dropout = 0.35\n"
                 : par ? "dropout = 0.13\nembedding_rnn_dropout = 0.3\nrnn_dropout = 0\nrnn_weight_dropout = 0\n"
                       : "dropout = 0.13\nembedding_rnn_dropout = 0.3\nrnn_dropout = 0.16\nrnn_weight_dropout = 0.3\n";
  s += "bptt_len = 512\n";
  s += std::string("train_attn_len = ") + (attn_qrnn ? "1024" : wt103 ? "384" : "768") + "\n";
  s += std::string("eval_attn_len = ") + (wt103 && !attn_qrnn ? "1600" : "2048") + "\ntie_weights = true\n";
  s += std::string("\n[optimizer]\npeak_lr = ") + (par ? "4e-4" : "4.5e-4") +
       "\nstart_lr = 1e-7\nfinal_lr = 5e-6\nweight_decay = " + (attn_qrnn ? "2e-3" : "1e-3") + "\n";
  s += "\n[training]\ntotal_steps = " + steps + "\nbatch_size = 64\nmicro_batch = " + (wt103 ? "16" : "32") +
       "\nvalid_every = 5000\ncheckpoint_every = 5000\nlog_every = 100\nvalid_batch_size = 8\nvalid_max_tokens = 0\n";
  return s;
}

std::string tiny_preset(std::string_view arch_text, const std::string& name) {
  const std::string arch(arch_text);
  return "[run]\narchitecture = " + arch + "\nseed = 1\noutput_dir = runs/" + name +
         "\nprecision = float\n\n"
         "[data]\npath = data/sample.txt\nlevel = byte\nsplit = 0.9, 0.05, 0.05\n\n"
         "[model]\nembed_dim = 64\nboom_dim = 256\nnum_heads = 2\n"
         "dropout = 0.05\nembedding_rnn_dropout = 0.05\nrnn_dropout = 0.05\nrnn_weight_dropout = 0.05\n"
         "bptt_len = 64\ntrain_attn_len = 128\neval_attn_len = 256\n\n"
         "[optimizer]\npeak_lr = 2e-3\nstart_lr = 1e-7\nfinal_lr = 5e-6\nweight_decay = 1e-3\n\n"
         "[training]\ntotal_steps = 300\nbatch_size = 16\nmicro_batch = 8\nvalid_every = 100\n"
         "checkpoint_every = 100\nlog_every = 10\nvalid_batch_size = 4\nvalid_max_tokens = 4096\n";
}

}  // namespace

const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> table{
      {"attn-qrnn-enwik8", full_preset(architectures::kAttnQrnn, true, false, false, "444000")},
      {"par-enwik8", full_preset(architectures::kPar, false, true, false, "280000")},
      {"hybrid-enwik8", full_preset(architectures::kHybrid, false, false, false, "275000")},
      {"attn-qrnn-wt103", full_preset(architectures::kAttnQrnn, true, false, true, "383400")},
      {"par-wt103", full_preset(architectures::kPar, false, true, true, "270500")},
      {"hybrid-wt103", full_preset(architectures::kHybrid, false, false, true, "264500")},
      {"attn-qrnn-enwik8-tiny", tiny_preset(architectures::kAttnQrnn, "attn-qrnn-enwik8-tiny")},
      {"par-enwik8-tiny", tiny_preset(architectures::kPar, "par-enwik8-tiny")},
      {"hybrid-enwik8-tiny", tiny_preset(architectures::kHybrid, "hybrid-enwik8-tiny")},
  };
  return table;
}

std::string preset_text(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) {
    std::string known;
    for (const auto& [k, v] : presets()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")", "preset");
  }
  return it->second;
}

}  // namespace hrt
