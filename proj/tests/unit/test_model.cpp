// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "hrt/errors.hpp"
#include "hrt/model/checkpoint.hpp"
#include "hrt/model/language_model.hpp"
#include "test_support.hpp"

using namespace hrt;
using hrt::testing::check_gradient;
using hrt::testing::random_matrix;

namespace {

std::vector<BlockKind> kinds(const std::string& s) {
  std::vector<BlockKind> out;
  for (char c : s) out.push_back(static_cast<BlockKind>(c));
  return out;
}

ModelConfig tiny_config(Index vocab = 11) {
  ModelConfig c;
  c.embed_dim = 8;
  c.boom_dim = 16;
  c.num_heads = 2;
  c.vocab_size = vocab;
  c.adaptive_cutoffs = {};
  c.dropout = 0.1;
  c.embedding_rnn_dropout = 0.2;
  c.rnn_dropout = 0.1;
  c.rnn_weight_dropout = 0.2;
  c.bptt_len = 6;
  c.train_attn_len = 8;
  c.eval_attn_len = 32;
  return c;
}

ModelConfig reference_config(bool attn_qrnn = false) {
  ModelConfig c;
  c.embed_dim = attn_qrnn ? 768 : 512;
  c.boom_dim = attn_qrnn ? 3072 : 2048;
  c.num_heads = attn_qrnn ? 12 : 8;
  c.vocab_size = 205;
  return c;
}

std::vector<std::int32_t> random_ids(std::size_t n, Index vocab, std::mt19937_64& gen) {
  std::uniform_int_distribution<std::int32_t> d(0, static_cast<std::int32_t>(vocab - 1));
  std::vector<std::int32_t> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

void randomize(LanguageModel<double>& m, std::mt19937_64& gen, double scale = 0.5) {
  for (auto* p : m.parameters()) p->value = random_matrix(p->value.rows(), p->value.cols(), gen, scale);
}

}  // namespace

TEST_CASE("architecture strings expand to the expected token sequences") {
  const auto attn_qrnn = parse_architecture(architectures::kAttnQrnn);
  CHECK(attn_qrnn.flat() == "|q|fq|fq|fqafff");
  CHECK(attn_qrnn.tokens == kinds("|q|fq|fq|fqafff"));
  CHECK(attn_qrnn.residual_groups == std::vector<ResidualGroup>{{1, 3}, {4, 6}, {7, 9}});

  const auto par = parse_architecture(architectures::kPar);
  CHECK(par.flat() == "|afffafffafffafff" + std::string("fffff"));
  CHECK(par.residual_groups.empty());

  const auto hybrid = parse_architecture(architectures::kHybrid);
  CHECK(hybrid.flat() == "|q|qfafffafffafffafff" + std::string("fff"));
  CHECK(hybrid.tokens.size() == 24);
  CHECK(hybrid.residual_groups == std::vector<ResidualGroup>{{3, 4}});

  CHECK(parse_architecture("| + 3 x ( q | f ) + ( q a f f f )").flat() == attn_qrnn.flat());
  CHECK(parse_architecture("|+3\xC3\x97(q|f)+(qafff)").flat() == attn_qrnn.flat());
  CHECK(parse_architecture("|+3*(q|f)+qafff").flat() == attn_qrnn.flat());
  CHECK(parse_architecture("2x(a2x(f))").flat() == "affaff");
}

TEST_CASE("architecture parse errors report positions") {
  auto position_of = [](const std::string& s) -> long {
    try {
      parse_architecture(s);
    } catch (const ParseError& e) {
      return static_cast<long>(e.position());
    }
    return -1;
  };
  CHECK(position_of("") == 0);
  CHECK(position_of("   ") == 3);
  CHECK(position_of("q+z") == 2);
  CHECK(position_of("3x(q|f") == 2);
  CHECK(position_of("q)") == 1);
  CHECK(position_of("0x(q)") == 0);
  CHECK(position_of("q+") == 2);
  CHECK(position_of("2(q)") == 1);
  CHECK(position_of("()") == 1);
}

TEST_CASE("model assembly follows the architecture") {
  auto cfg = tiny_config();
  SUBCASE("PAR") {
    auto m = build_model<float>(parse_architecture(architectures::kPar), cfg, 1);
    CHECK(m.num_blocks(BlockKind::Attention) == 4);
    CHECK(m.num_blocks(BlockKind::FeedForward) == 17);
    CHECK(m.qrnn_conv_widths().empty());
  }
  SUBCASE("Attn-QRNN") {
    auto m = build_model<float>(parse_architecture(architectures::kAttnQrnn), cfg, 1);
    CHECK(m.num_blocks(BlockKind::Attention) == 1);
    CHECK(m.num_blocks(BlockKind::Qrnn) == 4);
    CHECK(m.qrnn_conv_widths() == std::vector<int>{2, 1, 1, 1});
    CHECK(m.layout() == std::vector<std::string>{"|", "(q|f)", "(q|f)", "(q|f)", "q", "a", "f", "f", "f"});
  }
  SUBCASE("Hybrid") {
    auto m = build_model<float>(parse_architecture(architectures::kHybrid), cfg, 1);
    CHECK(m.qrnn_conv_widths() == std::vector<int>{2, 1});
    CHECK(m.layout().front() == "|");
    CHECK(m.layout()[3] == "(qf)");
  }
}

TEST_CASE("parameter counts by hand") {
  ModelConfig c = tiny_config(10);
  c.embed_dim = 4;
  c.boom_dim = 8;
  c.num_heads = 1;
  c.tie_weights = false;
  auto untied = build_model<double>(parse_architecture("f"), c, 3);
  CHECK(untied.count_params(false) == 84);
  CHECK(untied.count_params(true) == 84 + 10 * 4 + 10 * 4 + 10);
  c.tie_weights = true;
  auto tied = build_model<double>(parse_architecture("f"), c, 3);
  CHECK(tied.count_params(false) == 84);
  CHECK(untied.count_params(true) - tied.count_params(true) == 10 * 4);
}

TEST_CASE("non-embedding parameter counts of the three reference configurations") {
  auto count = [](std::string_view arch) {
    const bool aq = arch == architectures::kAttnQrnn;
    return build_model<float>(parse_architecture(arch), reference_config(aq), 0).count_params(false);
  };
  const double attn_qrnn = static_cast<double>(count(architectures::kAttnQrnn));
  const double par = static_cast<double>(count(architectures::kPar));
  const double hybrid = static_cast<double>(count(architectures::kHybrid));
  MESSAGE("Attn-QRNN " << attn_qrnn << ", PAR " << par << ", Hybrid " << hybrid);
  CHECK(std::abs(attn_qrnn / 40.48e6 - 1.0) < 0.05);
  CHECK(std::abs(par / 41.18e6 - 1.0) < 0.05);
  CHECK(std::abs(hybrid / 41.44e6 - 1.0) < 0.05);
  CHECK(attn_qrnn < par);
  CHECK(par < hybrid);
  CHECK((hybrid - par) / par < 0.03);
}

TEST_CASE("model config validation names the key") {
  auto key_of = [](ModelConfig c) -> std::string {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  ModelConfig c = tiny_config();
  CHECK(key_of(c).empty());
  c.num_heads = 3;
  CHECK(key_of(c) == "model.num_heads");
  c = tiny_config();
  c.adaptive_cutoffs = {5, 5};
  CHECK(key_of(c) == "model.adaptive_cutoffs");
  c = tiny_config();
  c.rnn_dropout = 1.0;
  CHECK(key_of(c) == "model.rnn_dropout");
  c = tiny_config();
  c.boom_dim = 4;
  CHECK(key_of(c) == "model.boom_dim");

  ModelConfig d = reference_config();
  d.adaptive_cutoffs = {3, 9};
  d.tie_weights = false;
  d.dropout = 0.125;
  const ModelConfig back = ModelConfig::from_map(d.to_map());
  CHECK(back.to_map() == d.to_map());
  CHECK_THROWS_AS(ModelConfig::from_map({{"model.nope", "1"}}), ConfigError);
}

TEST_CASE("cluster layout clamps cutoffs to the vocabulary") {
  ModelConfig c = tiny_config(12);
  c.embed_dim = 16;
  c.adaptive_cutoffs = {4, 8, 200};
  CHECK(c.adaptive());
  CHECK(c.cluster_bounds() == std::vector<Index>{0, 4, 8, 12});
  c.adaptive_cutoffs = {20, 40};
  CHECK_FALSE(c.adaptive());
  CHECK(c.cluster_bounds() == std::vector<Index>{0, 12});
}

TEST_CASE("adaptive embedding") {
  ClusterLayout layout{{0, 4, 8, 12}, 16, 4};
  AdaptiveEmbedding<double> emb(layout, "emb", RngKey(5));
  CHECK(emb.table(1).value.cols() == 4);
  CHECK(emb.table(2).value.cols() == 1);
  CHECK(emb.projection(1).value.rows() == 16);
  CHECK(emb.projection(2).value.rows() == 16);
  Index total = 0;
  for (auto* p : emb.parameters()) total += p->size();
  CHECK(total == 4 * 16 + (4 * 4 + 16 * 4) + (4 * 1 + 16 * 1));

  std::vector<std::int32_t> same(6, 9);
  auto out = emb.forward(same, 3, 2);
  for (Index r = 1; r < 6; ++r) CHECK(out.data().row(r) == out.data().row(0));
  const Matrix<double> expected = emb.projection(2).value * emb.table(2).value.row(1).transpose();
  CHECK((out.data().row(0).transpose() - expected).norm() < 1e-15);

  std::vector<std::int32_t> head{2};
  CHECK(emb.forward(head, 1, 1).data().row(0) == emb.table(0).value.row(2));

  std::vector<std::int32_t> bad{12};
  CHECK_THROWS_AS(emb.forward(bad, 1, 1), DataError);
}

TEST_CASE("adaptive softmax matches brute-force factorized enumeration") {
  std::mt19937_64 gen(77);
  const ClusterLayout layout{{0, 4, 8, 12}, 16, 4};
  for (bool tie : {false, true}) {
    AdaptiveEmbedding<double> emb(layout, "emb", RngKey(1));
    AdaptiveSoftmax<double> head(layout, "head", RngKey(2), tie ? &emb : nullptr);
    for (Index k = 0; k < 3; ++k) {
      head.weight(k).value = random_matrix(head.weight(k).value.rows(), head.weight(k).value.cols(), gen);
      head.bias(k).value = random_matrix(1, layout.size(k), gen);
      if (k > 0) {
        head.projection(k).value =
            random_matrix(head.projection(k).value.rows(), head.projection(k).value.cols(), gen);
      }
    }
    head.cluster_weight().value = random_matrix(2, 16, gen);
    head.cluster_bias().value = random_matrix(1, 2, gen);

    const Index n = 5;
    const Matrix<double> hidden = random_matrix(n, 16, gen, 2.0);
    const Matrix<double> lp = head.log_probs(hidden);
    for (Index i = 0; i < n; ++i) {
      // head scores: 4 words then 2 cluster tokens
      double head_scores[6];
      for (int j = 0; j < 6; ++j) {
        double s = j < 4 ? head.bias(0).value(0, j) : head.cluster_bias().value(0, j - 4);
        for (int d = 0; d < 16; ++d) {
          s += hidden(i, d) * (j < 4 ? head.weight(0).value(j, d) : head.cluster_weight().value(j - 4, d));
        }
        head_scores[j] = s;
      }
      double z_head = 0.0;
      for (double s : head_scores) z_head += std::exp(s);
      double total = 0.0;
      for (int w = 0; w < 12; ++w) {
        double p = 0.0;
        if (w < 4) {
          p = std::exp(head_scores[w]) / z_head;
        } else {
          const int k = w < 8 ? 1 : 2;
          const int dim = k == 1 ? 4 : 1;
          double tail_scores[4];
          for (int j = 0; j < 4; ++j) {
            double s = head.bias(k).value(0, j);
            for (int e = 0; e < dim; ++e) {
              double projected = 0.0;
              for (int d = 0; d < 16; ++d) projected += hidden(i, d) * head.projection(k).value(d, e);
              s += projected * head.weight(k).value(j, e);
            }
            tail_scores[j] = s;
          }
          double z_tail = 0.0;
          for (double s : tail_scores) z_tail += std::exp(s);
          p = std::exp(head_scores[3 + k]) / z_head * std::exp(tail_scores[w - 4 * k]) / z_tail;
        }
        total += p;
        CHECK(std::abs(lp(i, w) - std::log(p)) < 1e-7);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
      CHECK(std::abs(lp.row(i).array().exp().sum() - 1.0) < 1e-6);
    }

    std::vector<std::int32_t> targets{0, 5, 11, 3, 8};
    const Vector<double> got = head.forward(hidden, targets);
    for (Index i = 0; i < n; ++i) CHECK(std::abs(got(i) - lp(i, targets[i])) < 1e-12);
  }
}

TEST_CASE("single-cluster adaptive softmax equals a flat softmax") {
  std::mt19937_64 gen(3);
  const ClusterLayout layout{{0, 12}, 6, 4};
  AdaptiveSoftmax<double> head(layout, "head", RngKey(2));
  head.bias(0).value = random_matrix(1, 12, gen);
  const Matrix<double> hidden = random_matrix(4, 6, gen);
  const Matrix<double> lp = head.log_probs(hidden);
  for (Index i = 0; i < 4; ++i) {
    Eigen::VectorXd logits = head.weight(0).value * hidden.row(i).transpose() + head.bias(0).value.transpose();
    const double lse = std::log(logits.array().exp().sum());
    for (Index w = 0; w < 12; ++w) CHECK(std::abs(lp(i, w) - (logits(w) - lse)) < 1e-13);
  }
}

TEST_CASE("adaptive softmax gradients match finite differences") {
  std::mt19937_64 gen(11);
  const ClusterLayout layout{{0, 3, 6, 9}, 8, 2};
  for (bool tie : {false, true}) {
    AdaptiveEmbedding<double> emb(layout, "emb", RngKey(4));
    AdaptiveSoftmax<double> head(layout, "head", RngKey(5), tie ? &emb : nullptr);
    for (auto* p : head.parameters()) p->value = random_matrix(p->value.rows(), p->value.cols(), gen);
    Matrix<double> hidden = random_matrix(7, 8, gen);
    std::vector<std::int32_t> targets{0, 4, 8, 2, 6, 7, 3};
    const Matrix<double> w = random_matrix(7, 1, gen);
    auto loss = [&] { return head.forward(hidden, targets).dot(w.col(0)); };

    std::vector<Parameter<double>*> params = head.parameters();
    if (tie) {
      for (auto* p : emb.parameters()) params.push_back(p);
    } else {
      for (Index k = 0; k < 3; ++k) {
        if (k > 0) params.push_back(&head.projection(k));
      }
    }
    for (auto* p : params) p->zero_grad();
    loss();
    const Matrix<double> dhidden = head.backward(w.col(0));
    CHECK(check_gradient(hidden, dhidden, loss).max_rel < 1e-6);
    for (auto* p : params) {
      INFO(p->name);
      CHECK(check_gradient(p->value, p->grad, loss).max_rel < 1e-6);
    }
  }
}

TEST_CASE("tied weights share storage") {
  auto c = tiny_config();
  auto m = build_model<float>(parse_architecture("|f"), c, 9);
  CHECK(&m.head().weight(0) == &m.embedding().table(0));
  m.embedding().table(0).value(2, 3) = 42.0f;
  CHECK(m.head().weight(0).value(2, 3) == 42.0f);

  c.vocab_size = 40;
  c.adaptive_cutoffs = {10, 20};
  c.adaptive_div_factor = 2;
  auto a = build_model<float>(parse_architecture("|f"), c, 9);
  CHECK(&a.head().projection(1) == &a.embedding().projection(1));
  CHECK(&a.head().weight(2) == &a.embedding().table(2));
  c.tie_weights = false;
  auto u = build_model<float>(parse_architecture("|f"), c, 9);
  CHECK(&u.head().weight(0) != &u.embedding().table(0));
}

TEST_CASE("model outputs proper distributions") {
  std::mt19937_64 gen(2);
  auto c = tiny_config();
  auto m = build_model<float>(parse_architecture(architectures::kHybrid), c, 4);
  auto state = m.initial_state();
  const auto ids = random_ids(5 * 3, c.vocab_size, gen);
  for (bool training : {false, true}) {
    const Matrix<float> lp = m.log_probs(ids, 5, 3, state, {training, RngKey(8), 0});
    CHECK(lp.rows() == 15);
    CHECK(lp.cols() == c.vocab_size);
    for (Index r = 0; r < lp.rows(); ++r) CHECK(std::abs(std::log(lp.row(r).array().exp().sum())) < 1e-5f);
  }
  std::vector<std::int32_t> bad(15, 0);
  bad[7] = static_cast<std::int32_t>(c.vocab_size);
  CHECK_THROWS_AS(m.log_probs(bad, 5, 3, state, {}), DataError);
}

TEST_CASE("two windows with carried state equal one concatenated window") {
  std::mt19937_64 gen(21);
  auto c = tiny_config();
  c.eval_attn_len = 64;
  for (auto arch : {architectures::kHybrid, architectures::kAttnQrnn, architectures::kPar}) {
    INFO(arch);
    auto m = build_model<double>(parse_architecture(arch), c, 6);
    const Index batch = 2;
    const auto ids = random_ids(12 * batch, c.vocab_size, gen);
    auto whole_state = m.initial_state();
    const Matrix<double> whole = m.log_probs(ids, 12, batch, whole_state, {});

    auto state = m.initial_state();
    std::span<const std::int32_t> all(ids);
    const Matrix<double> first = m.log_probs(all.subspan(0, 5 * batch), 5, batch, state, {});
    const Matrix<double> second = m.log_probs(all.subspan(5 * batch), 7, batch, state, {});
    CHECK((first - whole.topRows(5 * batch)).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((second - whole.bottomRows(7 * batch)).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("model is causal") {
  std::mt19937_64 gen(5);
  auto c = tiny_config();
  auto m = build_model<double>(parse_architecture(architectures::kHybrid), c, 6);
  auto ids = random_ids(6 * 2, c.vocab_size, gen);
  for (bool training : {false, true}) {
    const ForwardContext ctx{training, RngKey(31), 0};
    auto s1 = m.initial_state();
    const Matrix<double> a = m.log_probs(ids, 6, 2, s1, ctx);
    auto changed = ids;
    changed[5 * 2 + 1] = (changed[5 * 2 + 1] + 1) % static_cast<std::int32_t>(c.vocab_size);
    auto s2 = m.initial_state();
    const Matrix<double> b = m.log_probs(changed, 6, 2, s2, ctx);
    CHECK(a.topRows(5 * 2) == b.topRows(5 * 2));
    CHECK(a.row(11) != b.row(11));
    CHECK(a.row(10) == b.row(10));
  }
}

TEST_CASE("same seed gives bit-identical parameters") {
  auto c = tiny_config();
  const auto arch = parse_architecture(architectures::kAttnQrnn);
  auto a = build_model<float>(arch, c, 17);
  auto b = build_model<float>(arch, c, 17);
  auto d = build_model<float>(arch, c, 18);
  auto pa = a.parameters(), pb = b.parameters(), pd = d.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value == pb[i]->value);
    if (pa[i]->value != pd[i]->value) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("full model gradient matches finite differences") {
  std::mt19937_64 gen(99);
  ModelConfig c = tiny_config(7);
  c.embed_dim = 4;
  c.boom_dim = 6;
  c.num_heads = 2;
  c.train_attn_len = 5;
  for (bool adaptive : {false, true}) {
    INFO("adaptive " << adaptive);
    if (adaptive) {
      c.vocab_size = 9;
      c.adaptive_cutoffs = {3, 6};
      c.adaptive_div_factor = 2;
    }
    auto m = build_model<double>(parse_architecture("|q|qf a f"), c, 12);
    randomize(m, gen);
    const Index time = 3, batch = 2;
    auto warm = m.initial_state();
    m.log_probs(random_ids(time * batch, c.vocab_size, gen), time, batch, warm, {true, RngKey(1), 0});
    const auto ids = random_ids(time * batch, c.vocab_size, gen);
    const auto targets = random_ids(time * batch, c.vocab_size, gen);
    const Matrix<double> w = random_matrix(time * batch, 1, gen);
    const ForwardContext ctx{true, RngKey(2), 0};
    // score-path gradients are ~1e-4 of an O(1) loss; h = 1e-4 keeps
    // round-off below the tolerance
    auto loss = [&] {
      auto s = warm;
      return m.forward(ids, targets, time, batch, s, ctx).dot(w.col(0));
    };
    m.zero_grad();
    loss();
    m.backward(w.col(0));
    for (auto* p : m.parameters()) {
      INFO(p->name);
      const Matrix<double> analytic = p->grad;
      const auto r = check_gradient(p->value, analytic, loss, 1e-4);
      INFO("worst " << r.worst << " analytic " << (r.worst >= 0 ? analytic.data()[r.worst] : 0.0));
      CHECK(r.max_rel < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip is byte-stable and restores the model") {
  std::mt19937_64 gen(1);
  auto c = tiny_config();
  auto m = build_model<float>(parse_architecture(architectures::kHybrid), c, 5);
  auto state = m.initial_state();
  const auto ids = random_ids(4 * 2, c.vocab_size, gen);
  m.log_probs(ids, 4, 2, state, {});

  Checkpoint ck;
  ck.config_echo = "[model]\nembed_dim = 8\n";
  ck.meta["step"] = "12";
  export_model(m, ck);
  export_state(state, "state/", ck);
  ck.put_ints("rng", {1, -2, 3});

  const auto dir = std::filesystem::temp_directory_path() / "hrt_test_model_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = dir / "a.ckpt";
  ck.save(path);
  const Checkpoint loaded = Checkpoint::load(path);
  CHECK(loaded.serialize() == ck.serialize());
  loaded.save(dir / "b.ckpt");
  CHECK(Checkpoint::load(dir / "b.ckpt").serialize() == ck.serialize());
  CHECK(loaded.get_ints("rng") == std::vector<std::int64_t>{1, -2, 3});

  auto restored = import_model<float>(loaded);
  auto restored_state = import_state(restored, "state/", loaded);
  auto next = random_ids(4 * 2, c.vocab_size, gen);
  const Matrix<float> expect = m.log_probs(next, 4, 2, state, {});
  const Matrix<float> got = restored.log_probs(next, 4, 2, restored_state, {});
  CHECK(expect == got);

  std::string bytes = ck.serialize();
  bytes[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes), CheckpointError);
  CHECK_THROWS_AS(Checkpoint::deserialize(ck.serialize().substr(0, 40)), CheckpointError);
  CHECK_THROWS_AS(Checkpoint::deserialize("garbage"), CheckpointError);
  CHECK_THROWS_AS(Checkpoint::load(dir / "missing.ckpt"), CheckpointError);

  auto other_cfg = c;
  other_cfg.embed_dim = 16;
  auto other = build_model<float>(parse_architecture(architectures::kHybrid), other_cfg, 5);
  CHECK_THROWS_AS(load_parameters(other, loaded), CheckpointError);
  std::filesystem::remove_all(dir);
}
