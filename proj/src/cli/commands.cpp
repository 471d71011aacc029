// SPDX-License-Identifier: Apache-2.0
#include "hrt/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>

#include "hrt/errors.hpp"
#include "hrt/eval/evaluate.hpp"
#include "hrt/model/checkpoint.hpp"
#include "hrt/training/trainer.hpp"

namespace hrt {

int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error" << (e.key().empty() ? "" : " [" + e.key() + "]") << ": " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitIo;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
}

namespace {

std::filesystem::path first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (std::filesystem::exists(dir / n)) return dir / n;
  }
  throw DataError("none of the expected files exist in '" + dir.string() + "' (looked for " +
                  std::string(*names.begin()) + ")");
}

const Corpus& pick_split(const CorpusSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "valid") return s.valid;
  if (name == "test") return s.test;
  throw ConfigError("split must be train, valid or test, got '" + name + "'", "split");
}

template <typename T>
int train_with(const RunConfig& cfg, bool resume, std::ostream& out, std::ostream& err, const CorpusSplits& splits) {
  LanguageModel<T> model(parse_architecture(cfg.architecture), cfg.model, cfg.seed);
  const bool has_valid = splits.valid.size() > static_cast<std::size_t>(cfg.model.bptt_len);
  if (!has_valid) err << "warning: validation split shorter than one window, validation disabled\n";
  Trainer<T> trainer(model, splits.train, has_valid ? &splits.valid : nullptr, cfg.optimizer, cfg.training,
                     cfg.output_dir, cfg.echo());
  if (resume && std::filesystem::exists(trainer.checkpoint_path())) {
    const auto ckpt = Checkpoint::load(trainer.checkpoint_path());
    if (ckpt.config_echo != cfg.echo()) err << "warning: resuming with a configuration that differs from the checkpoint\n";
    trainer.resume(ckpt);
    out << "resumed at step " << trainer.step() << '\n';
  }
  trainer.on_row = [&out](const MetricRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "step %lld  lr %.3e  train_bpc %.4f", static_cast<long long>(r.step), r.lr,
                  r.train_bpc);
    out << buf;
    if (r.valid_bpc) {
      std::snprintf(buf, sizeof buf, "  valid_bpc %.4f  valid_ppl %.3f", *r.valid_bpc, *r.valid_ppl);
      out << buf;
    }
    out << '\n' << std::flush;
  };
  trainer.on_warning = [&err](const std::string& w) { err << "warning: " << w << '\n'; };
  out << "parameters: " << model.count_params(true) << " total, " << model.count_params(false)
      << " non-embedding\n";
  trainer.run();
  out << "metrics: " << trainer.metrics_path().string() << "\ncheckpoint: " << trainer.checkpoint_path().string()
      << '\n';
  return kExitOk;
}

template <typename T>
int evaluate_with(const Checkpoint& ckpt, const Corpus& corpus, const EvaluateArgs& args, std::ostream& out) {
  auto model = import_model<T>(ckpt);
  EvalOptions opts;
  opts.batch_size = args.batch_size;
  opts.attn_length = args.attn_length;
  opts.max_tokens = args.max_tokens;
  std::ofstream dump;
  if (args.dump) {
    dump.open(*args.dump);
    if (!dump) throw DataError("cannot write '" + args.dump->string() + "'");
    dump << "offset,target,nll_nats\n";
    opts.token_dump = &dump;
  }
  const EvalReport report = evaluate(model, corpus, opts);
  if (args.csv) {
    out << EvalReport::csv_header() << '\n' << report.csv_row() << '\n';
  } else {
    out << report.summary();
  }
  return kExitOk;
}

}  // namespace

CorpusSplits load_splits(const DataConfig& data, std::shared_ptr<const Vocabulary> vocab) {
  switch (data.level) {
    case TokenLevel::Char:
      return load_char_corpus(read_file(data.path), data.split, std::move(vocab));
    case TokenLevel::Byte:
      return load_byte_corpus(read_file(data.path), data.split);
    case TokenLevel::Word: {
      const auto train = read_file(first_existing(data.path, {"train.txt", "wiki.train.tokens"}));
      const auto valid = read_file(first_existing(data.path, {"valid.txt", "wiki.valid.tokens"}));
      const auto test = read_file(first_existing(data.path, {"test.txt", "wiki.test.tokens"}));
      if (!vocab) return load_word_splits(train, valid, test, data.article_marker);
      return {load_word_corpus(train, data.article_marker, vocab), load_word_corpus(valid, data.article_marker, vocab),
              load_word_corpus(test, data.article_marker, vocab)};
    }
    case TokenLevel::Subword: {
      if (!vocab) vocab = std::make_shared<Vocabulary>(Vocabulary::read_token_list(data.path / "vocab.txt"));
      return {load_pretokenized(data.path / "train.ids", vocab), load_pretokenized(data.path / "valid.ids", vocab),
              load_pretokenized(data.path / "test.ids", vocab)};
    }
  }
  throw ConfigError("unsupported data.level", "data.level");
}

int cmd_train(RunConfig cfg, bool resume, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    cfg.validate();
    const CorpusSplits splits = load_splits(cfg.data);
    cfg.model.vocab_size = splits.train.vocab->size();
    cfg.model.validate();
    std::filesystem::create_directories(cfg.output_dir);
    {
      std::ofstream echo(cfg.output_dir / "config.echo");
      if (!echo) throw DataError("cannot write '" + (cfg.output_dir / "config.echo").string() + "'");
      echo << cfg.echo();
    }
    out << "data: " << splits.train.size() << " train / " << splits.valid.size() << " valid / "
        << splits.test.size() << " test tokens, vocabulary " << cfg.model.vocab_size << '\n';
    return cfg.precision == "double" ? train_with<double>(cfg, resume, out, err, splits)
                                     : train_with<float>(cfg, resume, out, err, splits);
  });
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const Checkpoint ckpt = Checkpoint::load(args.checkpoint);
    if (ckpt.config_echo.empty()) throw CheckpointError("checkpoint carries no run configuration");
    RunConfig cfg = RunConfig::from_map(parse_config_text(ckpt.config_echo));
    if (args.data) cfg.data.path = *args.data;
    if (!std::filesystem::exists(cfg.data.path)) {
      throw ConfigError("data.path '" + cfg.data.path.string() + "' does not exist", "data.path");
    }
    std::shared_ptr<const Vocabulary> vocab;
    if (ckpt.meta.count("data.vocab")) {
      vocab = std::make_shared<Vocabulary>(Vocabulary::deserialize(ckpt.get_meta("data.vocab")));
    }
    const CorpusSplits splits = load_splits(cfg.data, vocab);
    const Corpus& corpus = pick_split(splits, args.split);
    return cfg.precision == "double" ? evaluate_with<double>(ckpt, corpus, args, out)
                                     : evaluate_with<float>(ckpt, corpus, args, out);
  });
}

int cmd_params(const std::string& architecture, const ModelConfig& model, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    ArchitectureSpec spec;
    try {
      spec = parse_architecture(architecture);
    } catch (const ParseError& e) {
      err << architecture << '\n' << std::string(e.position(), ' ') << "^\n";
      throw;
    }
    LanguageModel<float> m(spec, model, 0);
    std::string layout;
    for (const auto& item : m.layout()) layout += item;
    out << "architecture: " << architecture << "  (" << layout << ")\n";
    out << std::left << std::setw(28) << "block" << std::right << std::setw(14) << "params" << '\n';
    for (const auto& b : m.block_params()) out << std::left << std::setw(28) << b.label << std::right << std::setw(14) << b.count << '\n';
    out << std::left << std::setw(28) << "total" << std::right << std::setw(14) << m.count_params(true) << '\n';
    out << std::left << std::setw(28) << "non-embedding" << std::right << std::setw(14) << m.count_params(false)
        << '\n';
    return kExitOk;
  });
}

int cmd_schedule(Index total, double start_lr, double peak_lr, double final_lr, bool csv, std::ostream& out,
                 std::ostream& err) {
  return run_guarded(err, [&] {
    if (total < 0) throw ConfigError("total must be >= 0", "total");
    OptimizerConfig cfg;
    cfg.start_lr = start_lr;
    cfg.peak_lr = peak_lr;
    cfg.final_lr = final_lr;
    cfg.validate();
    out << std::setprecision(17);
    if (csv) out << "step,lr\n";
    for (Index s = 0; s <= total; ++s) {
      const double lr = one_cycle_lr(s, total, cfg);
      if (csv) {
        out << s << ',' << lr << '\n';
      } else {
        out << "step " << s << "  lr " << lr << '\n';
      }
    }
    return kExitOk;
  });
}

}  // namespace hrt
