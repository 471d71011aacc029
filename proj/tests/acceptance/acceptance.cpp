// SPDX-License-Identifier: Apache-2.0
// Acceptance checks: one PASS/FAIL line per criterion. Exit status is 0
// only when every criterion passes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hrt/blocks/dropout.hpp"
#include "hrt/blocks/feed_forward.hpp"
#include "hrt/blocks/qrnn.hpp"
#include "hrt/blocks/relative_attention.hpp"
#include "hrt/data/synthetic.hpp"
#include "hrt/eval/evaluate.hpp"
#include "hrt/eval/metrics.hpp"
#include "hrt/training/trainer.hpp"
#include "test_support.hpp"

using namespace hrt;
using hrt::testing::check_gradient;
using hrt::testing::random_matrix;
using hrt::testing::random_sequence;
using hrt::testing::relative_error;
using hrt::testing::weighted_sum;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void randomize(const std::vector<Parameter<double>*>& params, std::mt19937_64& gen, double scale = 0.5) {
  for (auto* p : params) p->value = random_matrix(p->value.rows(), p->value.cols(), gen, scale);
}

void zero_grads(const std::vector<Parameter<double>*>& params) {
  for (auto* p : params) p->zero_grad();
}

// 1 -------------------------------------------------------------------------
Outcome architecture_fidelity() {
  struct Want {
    const char* name;
    std::string_view text;
    std::size_t q, a, f;
  };
  // The Attn-QRNN string "| + 3x(q|f) + (qafff)" expands to 6 f blocks.
  const Want wants[] = {{"Attn-QRNN", architectures::kAttnQrnn, 4, 1, 6},
                        {"PAR", architectures::kPar, 0, 4, 17},
                        {"Hybrid", architectures::kHybrid, 2, 4, 16}};
  Outcome o{true, {}};
  for (const auto& w : wants) {
    const auto spec = parse_architecture(w.text);
    const std::size_t q = spec.count(BlockKind::Qrnn), a = spec.count(BlockKind::Attention),
                      f = spec.count(BlockKind::FeedForward);
    o.pass = o.pass && q == w.q && a == w.a && f == w.f;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + w.name + " (" + std::to_string(q) + " q, " +
                std::to_string(a) + " a, " + std::to_string(f) + " f)";
  }
  o.detail += "; stated Attn-QRNN f count is 4, the string yields 6";
  return o;
}

// 2 -------------------------------------------------------------------------
ModelConfig reference_config(bool attn_qrnn) {
  ModelConfig c;
  c.embed_dim = attn_qrnn ? 768 : 512;
  c.boom_dim = attn_qrnn ? 3072 : 2048;
  c.num_heads = attn_qrnn ? 12 : 8;
  c.vocab_size = byte_vocabulary()->size();
  return c;
}

Outcome parameter_parity() {
  const std::pair<std::string_view, double> rows[] = {
      {architectures::kAttnQrnn, 40.48e6}, {architectures::kPar, 41.18e6}, {architectures::kHybrid, 41.44e6}};
  const char* names[] = {"Attn-QRNN", "PAR", "Hybrid"};
  double counts[3];
  Outcome o{true, {}};
  for (int i = 0; i < 3; ++i) {
    LanguageModel<float> m(parse_architecture(rows[i].first), reference_config(i == 0), 0);
    counts[i] = static_cast<double>(m.count_params(false));
    const double dev = counts[i] / rows[i].second - 1.0;
    o.pass = o.pass && std::abs(dev) <= 0.05;
    o.detail += std::string(i ? ", " : "") + names[i] + " " + fmt("%.2fM", counts[i] / 1e6) + " (" +
                fmt("%+.2f%%", 100.0 * dev) + ")";
  }
  const double spread = std::abs(counts[2] - counts[1]) / counts[1];
  o.pass = o.pass && counts[0] < counts[1] && counts[1] < counts[2] && spread < 0.03;
  o.detail += "; PAR/Hybrid spread " + fmt("%.2f%%", 100.0 * spread);
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome fo_pool_oracle() {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index T = 1 + static_cast<Index>(gen() % 64);
    const Index B = 1 + static_cast<Index>(gen() % 4);
    const Index D = 1 + static_cast<Index>(gen() % 8);
    auto z = random_sequence(T, B, D, gen);
    SequenceTensor<double> f(T, B, D), og(T, B, D);
    for (Index i = 0; i < f.data().size(); ++i) {
      f.data().data()[i] = unit(gen);
      og.data().data()[i] = unit(gen);
    }
    const Matrix<double> c0 = random_matrix(B, D, gen);
    const Index block = static_cast<Index>(gen() % static_cast<std::uint64_t>(T + 1));
    const auto got = fo_pool(z, f, og, c0, block);
    for (Index b = 0; b < B; ++b) {
      for (Index d = 0; d < D; ++d) {
        double c = c0(b, d);
        for (Index t = 0; t < T; ++t) {
          const Index r = t * B + b;
          c = f.data()(r, d) * c + (1.0 - f.data()(r, d)) * z.data()(r, d);
          worst = std::max(worst, relative_error(got.hidden.data()(r, d), og.data()(r, d) * c));
        }
      }
    }
  }
  return {worst < 1e-7, "1000 instances, max relative error " + fmt("%.2e", worst)};
}

// 4 -------------------------------------------------------------------------
Outcome gradient_suite() {
  // Central differences with h = 1e-5 are round-off bound on the attention
  // block (the error grows as h shrinks); 1e-4 keeps truncation error small.
  constexpr double kStep = 1e-4;
  std::mt19937_64 gen(4);
  auto pick = [&](Index lo, Index hi) { return lo + static_cast<Index>(gen() % static_cast<std::uint64_t>(hi - lo + 1)); };
  double worst[5] = {0, 0, 0, 0, 0};
  const int shapes = 20;
  for (int s = 0; s < shapes; ++s) {
    const ForwardContext ctx{true, RngKey(100 + s), 0};
    const Index T = pick(1, 5), B = pick(1, 3);
    auto track = [&](int slot, const testing::GradCheck& g) { worst[slot] = std::max(worst[slot], g.max_rel); };

    {  // q
      const Index D = pick(1, 5);
      QrnnLayer<double> q({D, static_cast<int>(pick(1, 2)), 0.3}, "q", RngKey(s));
      randomize(q.parameters(), gen);
      QrnnState<double> s0;
      q.forward(random_sequence(pick(1, 3), B, D, gen), s0, {});
      auto x = random_sequence(T, B, D, gen);
      const Matrix<double> w = random_matrix(T * B, D, gen);
      zero_grads(q.parameters());
      auto st = s0;
      q.forward(x, st, ctx);
      const auto dx = q.backward(SequenceTensor<double>(T, B, w));
      auto loss = [&] {
        auto st2 = s0;
        return weighted_sum(q.forward(x, st2, ctx).data(), w);
      };
      for (auto* p : q.parameters()) track(0, check_gradient(p->value, Matrix<double>(p->grad), loss, kStep));
      track(0, check_gradient(x.data(), dx.data(), loss, kStep));
    }
    {  // a
      const Index H = pick(1, 2), D = H * pick(1, 3);
      RelativeAttention<double> att({D, H, pick(1, 6), 0.2}, "a", RngKey(s));
      randomize(att.parameters(), gen);
      AttentionMemory<double> m0;
      att.forward(random_sequence(pick(1, 3), B, D, gen), m0, {});
      auto x = random_sequence(T, B, D, gen);
      const Matrix<double> w = random_matrix(T * B, D, gen);
      zero_grads(att.parameters());
      auto mem = m0;
      att.forward(x, mem, ctx);
      const auto dx = att.backward(SequenceTensor<double>(T, B, w));
      auto loss = [&] {
        auto m = m0;
        return weighted_sum(att.forward(x, m, ctx).data(), w);
      };
      for (auto* p : att.parameters()) track(1, check_gradient(p->value, Matrix<double>(p->grad), loss, kStep));
      track(1, check_gradient(x.data(), dx.data(), loss, kStep));
    }
    {  // f
      const Index D = pick(2, 5);
      FeedForward<double> ff({D, pick(D, 2 * D + 2), 0.2}, "f", RngKey(s));
      randomize(ff.parameters(), gen);
      auto x = random_sequence(T, B, D, gen);
      const Matrix<double> w = random_matrix(T * B, D, gen);
      zero_grads(ff.parameters());
      ff.forward(x, ctx);
      const auto dx = ff.backward(SequenceTensor<double>(T, B, w));
      auto loss = [&] { return weighted_sum(ff.forward(x, ctx).data(), w); };
      for (auto* p : ff.parameters()) track(2, check_gradient(p->value, Matrix<double>(p->grad), loss, kStep));
      track(2, check_gradient(x.data(), dx.data(), loss, kStep));
    }
    {  // |
      const Index D = pick(1, 6);
      RnnDropout<double> drop(0.1 * static_cast<double>(pick(0, 6)));
      auto x = random_sequence(T, B, D, gen);
      const Matrix<double> w = random_matrix(T * B, D, gen);
      drop.forward(x, ctx);
      const auto dx = drop.backward(SequenceTensor<double>(T, B, w));
      auto loss = [&] { return weighted_sum(drop.forward(x, ctx).data(), w); };
      track(3, check_gradient(x.data(), dx.data(), loss, kStep));
    }
    {  // adaptive softmax
      const Index clusters = pick(1, 3);
      std::vector<Index> bounds{0};
      for (Index k = 0; k < clusters; ++k) bounds.push_back(bounds.back() + pick(2, 5));
      const Index D = 8;
      const ClusterLayout layout{bounds, D, 2};
      const bool tie = gen() % 2 == 0;
      AdaptiveEmbedding<double> emb(layout, "emb", RngKey(s));
      AdaptiveSoftmax<double> head(layout, "head", RngKey(s + 1), tie ? &emb : nullptr);
      std::vector<Parameter<double>*> params = head.parameters();
      if (tie) {
        for (auto* p : emb.parameters()) params.push_back(p);
      } else {
        for (Index k = 1; k < clusters; ++k) params.push_back(&head.projection(k));
      }
      randomize(params, gen, 1.0);
      const Index n = T * B;
      Matrix<double> hidden = random_matrix(n, D, gen);
      std::vector<std::int32_t> targets(static_cast<std::size_t>(n));
      for (auto& t : targets) t = static_cast<std::int32_t>(gen() % static_cast<std::uint64_t>(bounds.back()));
      const Matrix<double> w = random_matrix(n, 1, gen);
      auto loss = [&] { return head.forward(hidden, targets).dot(w.col(0)); };
      zero_grads(params);
      loss();
      const Matrix<double> dh = head.backward(w.col(0));
      track(4, check_gradient(hidden, dh, loss, kStep));
      for (auto* p : params) track(4, check_gradient(p->value, p->grad, loss, kStep));
    }
  }
  const double all = *std::max_element(std::begin(worst), std::end(worst));
  std::string detail = std::to_string(shapes) + " shapes each, max relative error q " + fmt("%.1e", worst[0]) +
                       ", a " + fmt("%.1e", worst[1]) + ", f " + fmt("%.1e", worst[2]) + ", | " +
                       fmt("%.1e", worst[3]) + ", adaptive softmax " + fmt("%.1e", worst[4]);
  return {all < 1e-4, detail};
}

// 5 -------------------------------------------------------------------------
ModelConfig tiny_config(Index vocab, Index embed = 16) {
  ModelConfig c;
  c.embed_dim = embed;
  c.boom_dim = 2 * embed;
  c.num_heads = 2;
  c.vocab_size = vocab;
  c.adaptive_cutoffs = {};
  c.dropout = 0.1;
  c.embedding_rnn_dropout = 0.2;
  c.rnn_dropout = 0.1;
  c.rnn_weight_dropout = 0.2;
  c.bptt_len = 32;
  c.train_attn_len = 16;
  c.eval_attn_len = 64;
  return c;
}

Outcome causality() {
  std::mt19937_64 gen(5);
  const Index V = 13, T = 32;
  LanguageModel<double> m(parse_architecture(architectures::kHybrid), tiny_config(V), 5);
  std::vector<std::int32_t> ids(static_cast<std::size_t>(T));
  for (auto& i : ids) i = static_cast<std::int32_t>(gen() % V);
  double worst = 0.0;
  int later_changed = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index t = static_cast<Index>(gen() % (T - 1));
    const Index k = 1 + static_cast<Index>(gen() % static_cast<std::uint64_t>(T - 1 - t));
    const ForwardContext ctx{trial % 2 == 1, RngKey(trial), 0};
    auto s1 = m.initial_state();
    const Matrix<double> a = m.log_probs(ids, T, 1, s1, ctx);
    auto changed = ids;
    auto& tok = changed[static_cast<std::size_t>(t + k)];
    tok = static_cast<std::int32_t>((tok + 1 + gen() % (V - 1)) % V);
    auto s2 = m.initial_state();
    const Matrix<double> b = m.log_probs(changed, T, 1, s2, ctx);
    worst = std::max(worst, (a.topRows(t + 1) - b.topRows(t + 1)).cwiseAbs().maxCoeff());
    if ((a.row(t + k) - b.row(t + k)).cwiseAbs().maxCoeff() > 1e-9) ++later_changed;
  }
  return {worst <= 1e-6 && later_changed == 100,
          "100 (t,k) pairs, max change at positions <= t " + fmt("%.1e", worst) + ", position t+k changed in " +
              std::to_string(later_changed) + "/100"};
}

// 6 -------------------------------------------------------------------------
Outcome schedule_exactness() {
  double worst = 0.0;
  int cases = 0;
  for (double peak : {4e-4, 4.5e-4, 4.5e-4}) {
    for (Index total : {Index{3}, Index{100}, Index{264500}, Index{275000}, Index{280000}, Index{444000}}) {
      worst = std::max(worst, std::abs(one_cycle_lr(0, total, 1e-7, peak, 5e-6) - 1e-7));
      worst = std::max(worst, std::abs(one_cycle_lr(total / 3, total, 1e-7, peak, 5e-6) - peak));
      worst = std::max(worst, std::abs(one_cycle_lr(total, total, 1e-7, peak, 5e-6) - 5e-6));
      cases += 3;
    }
  }
  return {worst <= 1e-12, std::to_string(cases) + " endpoint checks, max deviation " + fmt("%.1e", worst)};
}

// 7 -------------------------------------------------------------------------
Outcome accumulation_equivalence() {
  std::string text = structured_text(40000, 2048, 7);
  const auto splits = load_char_corpus(text);
  const auto cfg = tiny_config(splits.train.vocab->size());
  const auto arch = parse_architecture(architectures::kHybrid);
  LanguageModel<double> full(arch, cfg, 7), split(arch, cfg, 7);
  OptimizerConfig oc;
  oc.peak_lr = 1e-3;
  AdamW<double> of(oc), os(oc);
  auto sf = full.initial_state(), ss = split.initial_state();
  StreamBatcher batcher(splits.train.ids, 64, 8);
  for (Index k = 0; k < 3; ++k) {
    accumulate_and_step(full, sf, of, batcher.window(k), 64, 1e-3, RngKey(70).split(k));
    accumulate_and_step(split, ss, os, batcher.window(k), 32, 1e-3, RngKey(70).split(k));
  }
  double worst = 0.0;
  const auto pa = full.parameters(), pb = split.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) worst = std::max(worst, (pa[i]->value - pb[i]->value).cwiseAbs().maxCoeff());
  return {worst <= 1e-6, "3 steps of 2x32 vs 1x64 streams (training mode, dropout on), max parameter difference " +
                             fmt("%.1e", worst)};
}

// 8 -------------------------------------------------------------------------
Outcome metric_exactness() {
  const double binary = bpc(std::vector<double>{std::log(0.5), std::log(0.5), std::log(0.5)});
  const double uniform4 = perplexity(std::vector<double>(5, std::log(0.25)));
  // "é" is one character of two bytes; predicting it with p = 1/4 costs 2 bits.
  const auto corpus = load_char_corpus("a\xc3\xa9", {1.0, 0.0, 0.0}).train;
  const double bpb = bits_per_byte(-std::log(0.25), corpus.bytes_between(1, 2));
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> lp(1 + gen() % 50);
    for (auto& x : lp) x = std::log(u(gen));
    worst = std::max(worst, std::abs(std::log(perplexity(lp)) - bpc(lp) * std::numbers::ln2));
  }
  const bool pass = std::abs(binary - 1.0) < 1e-12 && std::abs(uniform4 - 4.0) < 1e-12 && std::abs(bpb - 1.0) < 1e-12 &&
                    worst < 1e-10;
  return {pass, "bpc " + fmt("%.15g", binary) + ", ppl " + fmt("%.15g", uniform4) + ", bits/byte " + fmt("%.15g", bpb) +
                    ", max |ln ppl - bpc ln2| " + fmt("%.1e", worst)};
}

// 9 -------------------------------------------------------------------------
Outcome adaptive_oracle() {
  std::mt19937_64 gen(9);
  const ClusterLayout layout{{0, 4, 8, 12}, 16, 4};
  AdaptiveSoftmax<double> head(layout, "head", RngKey(9), nullptr);
  for (Index k = 0; k < 3; ++k) {
    head.weight(k).value = random_matrix(head.weight(k).value.rows(), head.weight(k).value.cols(), gen);
    head.bias(k).value = random_matrix(1, 4, gen);
    if (k > 0) head.projection(k).value = random_matrix(16, head.projection(k).value.cols(), gen);
  }
  head.cluster_weight().value = random_matrix(2, 16, gen);
  head.cluster_bias().value = random_matrix(1, 2, gen);
  const Index n = 50;
  const Matrix<double> hidden = random_matrix(n, 16, gen, 2.0);
  const Matrix<double> lp = head.log_probs(hidden);

  auto softmax = [](const std::vector<double>& s) {
    double z = 0.0;
    for (double v : s) z += std::exp(v);
    std::vector<double> p;
    for (double v : s) p.push_back(std::exp(v) / z);
    return p;
  };
  double worst = 0.0, worst_norm = 0.0;
  for (Index i = 0; i < n; ++i) {
    std::vector<double> head_scores;
    for (int j = 0; j < 6; ++j) {
      double s = j < 4 ? head.bias(0).value(0, j) : head.cluster_bias().value(0, j - 4);
      for (int d = 0; d < 16; ++d) s += hidden(i, d) * (j < 4 ? head.weight(0).value(j, d) : head.cluster_weight().value(j - 4, d));
      head_scores.push_back(s);
    }
    const auto ph = softmax(head_scores);
    for (int w = 0; w < 12; ++w) {
      double p = 0.0;
      if (w < 4) {
        p = ph[static_cast<std::size_t>(w)];
      } else {
        const int k = w < 8 ? 1 : 2;
        const Index dim = head.projection(k).value.cols();
        std::vector<double> tail;
        for (int j = 0; j < 4; ++j) {
          double s = head.bias(k).value(0, j);
          for (Index e = 0; e < dim; ++e) {
            double projected = 0.0;
            for (int d = 0; d < 16; ++d) projected += hidden(i, d) * head.projection(k).value(d, e);
            s += projected * head.weight(k).value(j, e);
          }
          tail.push_back(s);
        }
        p = ph[static_cast<std::size_t>(3 + k)] * softmax(tail)[static_cast<std::size_t>(w - 4 * k)];
      }
      worst = std::max(worst, std::abs(lp(i, w) - std::log(p)));
    }
    worst_norm = std::max(worst_norm, std::abs(lp.row(i).array().exp().sum() - 1.0));
  }
  return {worst < 1e-7 && worst_norm < 1e-6, "vocab 12, cutoffs [4, 8], 50 rows: max log-prob error " +
                                                  fmt("%.1e", worst) + ", max normalization error " +
                                                  fmt("%.1e", worst_norm)};
}

// 10 ------------------------------------------------------------------------
struct OverfitResult {
  double train_bpc = 0.0, valid_bpc = 0.0, seconds = 0.0;
};

OverfitResult overfit_run(std::string_view arch, const CorpusSplits& splits, const std::filesystem::path& dir) {
  ModelConfig c;
  c.embed_dim = 64;
  c.boom_dim = 256;
  c.num_heads = 2;
  c.vocab_size = splits.train.vocab->size();
  c.adaptive_cutoffs = {};
  c.dropout = c.embedding_rnn_dropout = c.rnn_dropout = c.rnn_weight_dropout = 0.05;
  c.bptt_len = 64;
  c.train_attn_len = 128;
  c.eval_attn_len = 256;
  LanguageModel<float> m(parse_architecture(arch), c, 1);
  OptimizerConfig o;
  o.peak_lr = 2e-3;
  TrainConfig t;
  t.total_steps = 2000;
  t.batch_size = 16;
  t.micro_batch = 16;
  t.valid_every = 500;
  t.checkpoint_every = 2000;
  t.log_every = 100;
  t.valid_batch_size = 4;
  t.seed = 1;
  const auto start = std::chrono::steady_clock::now();
  Trainer<float> trainer(m, splits.train, &splits.valid, o, t, dir);
  trainer.run();
  EvalOptions eo;
  eo.batch_size = 4;
  OverfitResult r;
  r.train_bpc = evaluate(m, splits.train, eo).bpc;
  r.valid_bpc = evaluate(m, splits.valid, eo).bpc;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

Outcome tiny_overfit(const std::filesystem::path& work) {
  const auto splits = load_char_corpus(structured_text(50000, 2048, 1));
  const OverfitResult hybrid = overfit_run(architectures::kHybrid, splits, work / "overfit_hybrid");
  const OverfitResult par = overfit_run(architectures::kPar, splits, work / "overfit_par");
  const OverfitResult aq = overfit_run(architectures::kAttnQrnn, splits, work / "overfit_attn_qrnn");
  const bool ordered = hybrid.valid_bpc <= par.valid_bpc && par.valid_bpc <= aq.valid_bpc;
  std::string d = "vocab " + std::to_string(splits.train.vocab->size()) + ", Hybrid train " +
                  fmt("%.3f", hybrid.train_bpc) + " valid " + fmt("%.3f", hybrid.valid_bpc) + " (" +
                  fmt("%.0fs", hybrid.seconds) + "); recorded valid BPC: PAR " + fmt("%.3f", par.valid_bpc) +
                  ", Attn-QRNN " + fmt("%.3f", aq.valid_bpc) + "; Hybrid <= PAR <= Attn-QRNN " +
                  (ordered ? "holds" : "does not hold");
  return {hybrid.train_bpc < 0.5 && hybrid.valid_bpc < 1.5, d};
}

// 11 ------------------------------------------------------------------------
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome resume_determinism(const std::filesystem::path& work) {
  const auto splits = load_char_corpus(structured_text(30000, 2048, 11));
  auto c = tiny_config(splits.train.vocab->size(), 32);
  const auto arch = parse_architecture(architectures::kHybrid);
  OptimizerConfig o;
  o.peak_lr = 2e-3;
  TrainConfig t;
  t.total_steps = 40;
  t.batch_size = 8;
  t.micro_batch = 4;
  t.valid_every = 10;
  t.checkpoint_every = 10;
  t.log_every = 1;
  t.valid_batch_size = 2;
  t.seed = 11;

  const auto whole_dir = work / "resume_whole", cut_dir = work / "resume_cut";
  std::filesystem::remove_all(whole_dir);
  std::filesystem::remove_all(cut_dir);
  {
    LanguageModel<float> m(arch, c, 3);
    Trainer<float> tr(m, splits.train, &splits.valid, o, t, whole_dir);
    tr.run();
  }
  {
    LanguageModel<float> m(arch, c, 3);
    Trainer<float> tr(m, splits.train, &splits.valid, o, t, cut_dir);
    tr.on_row = [](const MetricRow& r) {
      if (r.step == 25) throw std::runtime_error("simulated interruption");
    };
    try {
      tr.run();
    } catch (const std::runtime_error&) {
    }
  }
  const auto ckpt = Checkpoint::load(cut_dir / "checkpoint.ckpt");
  LanguageModel<float> m(arch, c, 999);
  Trainer<float> tr(m, splits.train, &splits.valid, o, t, cut_dir);
  tr.resume(ckpt);
  const Index resumed_at = tr.step();
  tr.run();
  const std::string a = slurp(whole_dir / "metrics.csv"), b = slurp(cut_dir / "metrics.csv");
  const auto rows = std::count(a.begin(), a.end(), '\n') - 1;
  return {a == b && !a.empty(), "interrupted at step 25, resumed from step " + std::to_string(resumed_at) + "; " +
                                    std::to_string(rows) + " metric rows " +
                                    (a == b ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const auto work = std::filesystem::temp_directory_path() / "hrt_acceptance";
  std::filesystem::create_directories(work);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"architecture fidelity", architecture_fidelity},
      {"parameter parity", parameter_parity},
      {"fo-pool scan oracle", fo_pool_oracle},
      {"gradient suite", gradient_suite},
      {"causality", causality},
      {"schedule exactness", schedule_exactness},
      {"accumulation equivalence", accumulation_equivalence},
      {"metric exactness", metric_exactness},
      {"adaptive softmax oracle", adaptive_oracle},
      {"tiny overfit", [&] { return tiny_overfit(work); }},
      {"resume determinism", [&] { return resume_determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("%s  %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
