// SPDX-License-Identifier: Apache-2.0
#include "hrt/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hrt/errors.hpp"
#include "hrt/eval/evaluate.hpp"

namespace hrt {

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("training." + key + ": " + what, "training." + key);
  };
  if (total_steps < 0) fail("total_steps", "must be >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (micro_batch < 1) fail("micro_batch", "must be >= 1");
  if (batch_size % micro_batch != 0) {
    fail("micro_batch", "micro_batch " + std::to_string(micro_batch) + " does not divide batch_size " +
                            std::to_string(batch_size));
  }
  if (valid_every < 1) fail("valid_every", "must be >= 1");
  if (checkpoint_every < 1) fail("checkpoint_every", "must be >= 1");
  if (log_every < 1) fail("log_every", "must be >= 1");
  if (valid_batch_size < 1) fail("valid_batch_size", "must be >= 1");
  if (valid_max_tokens < 0) fail("valid_max_tokens", "must be >= 0");
}

template <typename T>
MicroStepResult accumulate_and_step(LanguageModel<T>& model, ModelState<T>& state, AdamW<T>& optimizer,
                                    const StreamBatch& batch, Index micro_batch, double lr, RngKey step_key) {
  if (micro_batch < 1 || batch.batch % micro_batch != 0) {
    throw ConfigError("micro_batch " + std::to_string(micro_batch) + " does not divide the batch of " +
                          std::to_string(batch.batch),
                      "training.micro_batch");
  }
  MicroStepResult result;
  result.lr = lr;
  result.tokens = batch.counted();
  state.reset_columns(batch.stream_reset);
  model.zero_grad();
  const bool whole = micro_batch == batch.batch;
  const ModelState<T> before = whole ? ModelState<T>() : state;
  const T weight = result.tokens > 0 ? T(1) / static_cast<T>(result.tokens) : T(0);
  for (Index first = 0; first < batch.batch; first += micro_batch) {
    const StreamBatch part = whole ? batch : batch.columns(first, micro_batch);
    ModelState<T> micro_state = whole ? std::move(state) : before.slice_columns(first, micro_batch);
    const ForwardContext ctx{true, step_key, first};
    const Vector<T> lp = model.forward(part.inputs, part.targets, part.time, part.batch, micro_state, ctx);
    Vector<T> grad(lp.size());
    for (Index i = 0; i < lp.size(); ++i) {
      const bool counted = part.loss_mask[static_cast<std::size_t>(i)] != 0;
      grad(i) = counted ? -weight : T(0);
      if (counted) result.loss_nats -= static_cast<double>(lp(i));
    }
    model.backward(grad);
    if (whole) {
      state = std::move(micro_state);
    } else {
      state.assign_columns(first, batch.batch, micro_state);
    }
  }
  if (result.tokens > 0 && std::isfinite(result.loss_nats)) result.report = optimizer.step(model.parameters(), lr);
  return result;
}

std::string MetricRow::csv_header() { return "step,lr,train_loss,train_bpc,valid_bpc,valid_ppl,tokens_per_sec"; }

std::string MetricRow::csv() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string s = std::to_string(step) + "," + num(lr) + "," + num(train_loss) + "," + num(train_bpc) + ",";
  if (valid_bpc) s += num(*valid_bpc);
  s += ",";
  if (valid_ppl) s += num(*valid_ppl);
  s += "," + num(tokens_per_sec);
  return s;
}

template <typename T>
Trainer<T>::Trainer(LanguageModel<T>& model, const Corpus& train, const Corpus* valid, const OptimizerConfig& opt,
                    const TrainConfig& cfg, std::filesystem::path output_dir, std::string config_echo)
    : model_(model),
      train_(train),
      valid_(valid),
      opt_cfg_(opt),
      cfg_(cfg),
      output_dir_(std::move(output_dir)),
      config_echo_(std::move(config_echo)),
      optimizer_(opt),
      state_(model.initial_state()) {
  cfg_.validate();
  if (!train.vocab || train.vocab->size() != model.config().vocab_size) {
    throw ConfigError("training corpus vocabulary (" + std::to_string(train.vocab ? train.vocab->size() : 0) +
                          ") does not match model.vocab_size " + std::to_string(model.config().vocab_size),
                      "model.vocab_size");
  }
  const Index bptt = model.config().bptt_len;
  if (train.article_starts.empty()) {
    stream_.emplace(train.ids, cfg_.batch_size, bptt);
  } else {
    article_batches_ = make_article_batches(train.articles(), cfg_.batch_size, bptt, train.vocab->pad_id());
    if (article_batches_.empty()) throw DataError("training corpus has no article with a target");
  }
}

template <typename T>
StreamBatch Trainer<T>::window(Index step) const {
  if (stream_) return stream_->window(step % stream_->windows());
  return article_batches_[static_cast<std::size_t>(step % static_cast<Index>(article_batches_.size()))];
}

template <typename T>
Checkpoint Trainer<T>::snapshot() {
  Checkpoint ck;
  ck.config_echo = config_echo_;
  ck.meta["train.step"] = std::to_string(step_);
  ck.meta["train.total_steps"] = std::to_string(cfg_.total_steps);
  ck.meta["train.seed"] = std::to_string(cfg_.seed);
  ck.meta["data.level"] = to_string(train_.level);
  ck.meta["data.vocab"] = train_.vocab->serialize();
  export_model(model_, ck);
  optimizer_.save(model_.parameters(), ck);
  export_state(state_, "train_state/", ck);
  return ck;
}

template <typename T>
void Trainer<T>::resume(const Checkpoint& ckpt) {
  const Index step = std::stoll(ckpt.get_meta("train.step"));
  if (step < 0 || step > cfg_.total_steps) {
    throw CheckpointError("checkpoint step " + std::to_string(step) + " outside this run's " +
                          std::to_string(cfg_.total_steps) + " steps");
  }
  load_parameters(model_, ckpt);
  optimizer_.load(model_.parameters(), ckpt);
  state_ = import_state(model_, "train_state/", ckpt);
  step_ = step;

  std::vector<std::string> kept;
  if (std::ifstream in(metrics_path()); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line == MetricRow::csv_header()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= step) kept.push_back(line);
    }
  }
  std::filesystem::create_directories(output_dir_);
  std::ofstream out(metrics_path(), std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + metrics_path().string() + "'");
  out << MetricRow::csv_header() << '\n';
  for (const auto& l : kept) out << l << '\n';
}

template <typename T>
void Trainer<T>::write_row(const MetricRow& row) {
  std::ofstream out(metrics_path(), std::ios::app);
  if (!out) throw CheckpointError("cannot append to '" + metrics_path().string() + "'");
  out << row.csv() << '\n';
  if (on_row) on_row(row);
}

template <typename T>
std::vector<MetricRow> Trainer<T>::run() {
  std::filesystem::create_directories(output_dir_);
  if (step_ == 0) {
    std::ofstream out(metrics_path(), std::ios::trunc);
    if (!out) throw CheckpointError("cannot write '" + metrics_path().string() + "'");
    out << MetricRow::csv_header() << '\n';
  }
  std::vector<MetricRow> rows;
  const RngKey train_key = RngKey(cfg_.seed).split(1);
  double loss_sum = 0.0;
  Index tokens = 0;
  auto started = std::chrono::steady_clock::now();
  while (step_ < cfg_.total_steps) {
    const double lr = one_cycle_lr(step_, cfg_.total_steps, opt_cfg_);
    const StreamBatch batch = window(step_);
    const auto r = accumulate_and_step(model_, state_, optimizer_, batch, cfg_.micro_batch, lr,
                                       train_key.split(static_cast<std::uint64_t>(step_)));
    if (!std::isfinite(r.loss_nats)) {
      throw NumericalError("non-finite training loss at step " + std::to_string(step_ + 1) +
                           "; last checkpoint kept at " + checkpoint_path().string());
    }
    if (r.report.skipped && on_warning) {
      on_warning("step " + std::to_string(step_ + 1) + ": non-finite gradient, update skipped");
    }
    ++step_;
    loss_sum += r.loss_nats;
    tokens += r.tokens;

    const bool last = step_ == cfg_.total_steps;
    const bool validate = valid_ != nullptr && (step_ % cfg_.valid_every == 0 || last);
    if (step_ % cfg_.log_every == 0 || validate || last) {
      MetricRow row;
      row.step = step_;
      row.lr = lr;
      row.train_loss = tokens > 0 ? loss_sum / static_cast<double>(tokens) : 0.0;
      row.train_bpc = row.train_loss / std::numbers::ln2;
      if (validate) {
        EvalOptions eo;
        eo.batch_size = cfg_.valid_batch_size;
        eo.max_tokens = cfg_.valid_max_tokens;
        const EvalReport rep = evaluate(model_, *valid_, eo);
        row.valid_bpc = rep.bpc;
        row.valid_ppl = rep.ppl;
      }
      if (!cfg_.deterministic) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        row.tokens_per_sec = secs > 0.0 ? static_cast<double>(tokens) / secs : 0.0;
      }
      write_row(row);
      rows.push_back(row);
      loss_sum = 0.0;
      tokens = 0;
      started = std::chrono::steady_clock::now();
    }
    if (step_ % cfg_.checkpoint_every == 0 || last) snapshot().save(checkpoint_path());
  }
  return rows;
}

template MicroStepResult accumulate_and_step<float>(LanguageModel<float>&, ModelState<float>&, AdamW<float>&,
                                                    const StreamBatch&, Index, double, RngKey);
template MicroStepResult accumulate_and_step<double>(LanguageModel<double>&, ModelState<double>&, AdamW<double>&,
                                                     const StreamBatch&, Index, double, RngKey);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace hrt
