// SPDX-License-Identifier: Apache-2.0
// hrt: train, evaluate, count parameters and print learning-rate schedules.
#include <iostream>

#include "CLI11.hpp"
#include "hrt/cli/commands.hpp"
#include "hrt/data/corpus.hpp"
#include "hrt/errors.hpp"

using namespace hrt;

namespace {

std::string keys_help() {
  std::string s = "Config keys (file sections [run] [data] [model] [optimizer] [training]; --set section.key=value):\n";
  for (const auto& k : config_keys()) s += "  " + k.key + std::string(k.key.size() < 30 ? 30 - k.key.size() : 1, ' ') + k.help + "\n";
  s += "Presets:";
  for (const auto& [name, text] : presets()) s += " " + name;
  return s + "\n";
}

struct ConfigSources {
  std::string preset;
  std::string file;
  std::vector<std::string> sets;
};

void add_config_options(CLI::App* cmd, ConfigSources& src) {
  cmd->add_option("--preset", src.preset, "bundled configuration to start from");
  cmd->add_option("--config", src.file, "config file applied over the preset");
  cmd->add_option("--set", src.sets, "override, section.key=value (repeatable)");
}

/// preset, then file, then --set overrides.
RunConfig resolve(const ConfigSources& src) {
  RunConfig cfg;
  if (!src.preset.empty()) cfg.apply(parse_config_text(preset_text(src.preset)));
  if (!src.file.empty()) cfg.apply(parse_config_text(read_file(src.file)));
  ConfigMap overrides;
  for (const auto& s : src.sets) overrides.insert_or_assign(parse_override(s).first, parse_override(s).second);
  cfg.apply(overrides);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid recurrent/attention language models: train, evaluate, params, schedule"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 2 configuration error, 3 i/o or checkpoint error, 4 numerical abort.");

  ConfigSources train_src;
  std::optional<std::uint64_t> seed;
  std::string output, data;
  bool resume = false;
  bool print_config = false;
  auto* train = app.add_subcommand("train", "train a model and write metrics.csv, checkpoint.ckpt, config.echo");
  add_config_options(train, train_src);
  train->add_option("--seed", seed, "shorthand for --set run.seed=N");
  train->add_option("--output", output, "shorthand for --set run.output_dir=DIR");
  train->add_option("--data", data, "shorthand for --set data.path=PATH");
  train->add_flag("--resume", resume, "continue from checkpoint.ckpt in the output directory");
  train->add_flag("--print-config", print_config, "print the resolved configuration and exit");
  train->footer(keys_help());

  EvaluateArgs eval_args;
  std::string eval_data, eval_dump;
  auto* evaluate = app.add_subcommand("evaluate", "score a split with a trained checkpoint");
  evaluate->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
  evaluate->add_option("--data", eval_data, "corpus path replacing the one recorded in the checkpoint");
  evaluate->add_option("--split", eval_args.split, "train, valid or test")->capture_default_str();
  evaluate->add_option("--attn-len", eval_args.attn_length, "attention length (default: model.eval_attn_len)");
  evaluate->add_option("--batch-size", eval_args.batch_size, "parallel streams")->capture_default_str();
  evaluate->add_option("--max-tokens", eval_args.max_tokens, "score only the first N targets");
  evaluate->add_option("--dump", eval_dump, "write per-token offset,target,nll_nats rows");
  evaluate->add_flag("--csv", eval_args.csv, "print the report as CSV");

  ConfigSources params_src;
  std::string params_arch;
  Index params_vocab = 0;
  auto* params = app.add_subcommand("params", "print total, non-embedding and per-block parameter counts");
  add_config_options(params, params_src);
  params->add_option("--arch", params_arch, "architecture string (overrides run.architecture)");
  params->add_option("--vocab", params_vocab, "vocabulary size (default: model.vocab_size)");

  ConfigSources sched_src;
  Index total = 0;
  std::optional<double> start, peak, final_lr;
  bool csv = false;
  auto* schedule = app.add_subcommand("schedule", "print the one-cycle learning-rate curve");
  add_config_options(schedule, sched_src);
  schedule->add_option("--total", total, "total steps")->required();
  schedule->add_option("--start", start, "start learning rate");
  schedule->add_option("--peak", peak, "peak learning rate");
  schedule->add_option("--final", final_lr, "final learning rate");
  schedule->add_flag("--csv", csv, "print step,lr rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*train) {
    RunConfig cfg;
    const int rc = run_guarded(std::cerr, [&] {
      auto src = train_src;
      if (seed) src.sets.push_back("run.seed=" + std::to_string(*seed));
      if (!output.empty()) src.sets.push_back("run.output_dir=" + output);
      if (!data.empty()) src.sets.push_back("data.path=" + data);
      cfg = resolve(src);
      return kExitOk;
    });
    if (rc != kExitOk) return rc;
    if (print_config) {
      std::cout << cfg.echo();
      return kExitOk;
    }
    return cmd_train(cfg, resume, std::cout, std::cerr);
  }
  if (*evaluate) {
    if (!eval_data.empty()) eval_args.data = eval_data;
    if (!eval_dump.empty()) eval_args.dump = eval_dump;
    return cmd_evaluate(eval_args, std::cout, std::cerr);
  }
  if (*params) {
    RunConfig cfg;
    const int rc = run_guarded(std::cerr, [&] {
      cfg = resolve(params_src);
      return kExitOk;
    });
    if (rc != kExitOk) return rc;
    if (params_vocab > 0) cfg.model.vocab_size = params_vocab;
    const std::string arch = params_arch.empty() ? cfg.architecture : params_arch;
    if (arch.empty()) {
      std::cerr << "config error [run.architecture]: pass --arch or a preset/config naming one\n";
      return kExitConfig;
    }
    return cmd_params(arch, cfg.model, std::cout, std::cerr);
  }
  RunConfig cfg;
  const int rc = run_guarded(std::cerr, [&] {
    cfg = resolve(sched_src);
    return kExitOk;
  });
  if (rc != kExitOk) return rc;
  return cmd_schedule(total, start.value_or(cfg.optimizer.start_lr), peak.value_or(cfg.optimizer.peak_lr),
                      final_lr.value_or(cfg.optimizer.final_lr), csv, std::cout, std::cerr);
}
