// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "hrt/errors.hpp"
#include "hrt/eval/evaluate.hpp"
#include "hrt/eval/metrics.hpp"
#include "test_support.hpp"

using namespace hrt;

namespace {

ModelConfig tiny_config(Index vocab) {
  ModelConfig c;
  c.embed_dim = 8;
  c.boom_dim = 16;
  c.num_heads = 2;
  c.vocab_size = vocab;
  c.adaptive_cutoffs = {};
  c.bptt_len = 16;
  c.train_attn_len = 16;
  c.eval_attn_len = 256;
  return c;
}

Corpus text_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::string text;
  const std::string alphabet = "abcdefgh ";
  for (std::size_t i = 0; i < n; ++i) text += alphabet[gen() % alphabet.size()];
  return load_char_corpus(text, {1.0, 0.0, 0.0}).train;
}

}  // namespace

TEST_CASE("metric worked examples") {
  const std::vector<double> half{std::log(0.5), std::log(0.5)};
  CHECK(bpc(half) == doctest::Approx(1.0).epsilon(1e-15));

  const std::vector<double> mixed{std::log(0.5), std::log(0.25), std::log(0.25)};
  CHECK(bpc(mixed) == doctest::Approx(5.0 / 3.0).epsilon(1e-15));

  const std::vector<double> quarter(10, std::log(0.25));
  CHECK(perplexity(quarter) == doctest::Approx(4.0).epsilon(1e-12));

  // ppl equals the inverse geometric mean of the probabilities.
  const std::vector<double> probs{0.1, 0.7, 0.3, 0.05};
  std::vector<double> lp;
  double product = 1.0;
  for (double p : probs) {
    lp.push_back(std::log(p));
    product *= p;
  }
  CHECK(perplexity(lp) == doctest::Approx(std::pow(product, -1.0 / probs.size())).epsilon(1e-12));
  CHECK(std::abs(std::log(perplexity(lp)) - bpc(lp) * std::numbers::ln2) < 1e-10);

  // One two-byte character predicted with probability 1/4 costs 2 bits over 2 bytes.
  CHECK(bits_per_byte(-std::log(0.25), 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bits_per_byte(-std::log(0.5), 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(bpc_from_total(-2.0 * std::log(0.5), 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(perplexity_from_total(-3.0 * std::log(0.25), 3) == doctest::Approx(4.0).epsilon(1e-12));

  CHECK_THROWS_AS(bpc(std::vector<double>{}), DataError);
  CHECK_THROWS_AS(bits_per_byte(1.0, 0), DataError);
}

TEST_CASE("report derives all metrics from totals") {
  const auto r = EvalReport::from_totals(10.0 * std::log(4.0), 10, 20, 64);
  CHECK(r.bpc == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(r.ppl == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.bits_per_byte == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.csv_row().rfind("13.862943611198906,10,20,", 0) == 0);
  CHECK(EvalReport::csv_header() == "total_nll_nats,token_count,utf8_byte_count,bpc,ppl,bits_per_byte,attn_length");
}

TEST_CASE("a uniform model scores log2 V bits per character") {
  const Corpus c = text_corpus(300, 1);
  LanguageModel<double> m(parse_architecture("|q|f a f"), tiny_config(c.vocab->size()), 3);
  for (auto* p : m.parameters()) p->value.setZero();
  const auto r = evaluate(m, c);
  CHECK(r.token_count == 299);
  CHECK(r.utf8_byte_count == 299);
  CHECK(r.bpc == doctest::Approx(std::log2(static_cast<double>(c.vocab->size()))).epsilon(1e-12));
  CHECK(r.ppl == doctest::Approx(static_cast<double>(c.vocab->size())).epsilon(1e-10));
}

TEST_CASE("windowed evaluation matches one-pass rescoring") {
  const Corpus c = text_corpus(200, 2);
  LanguageModel<double> m(parse_architecture(architectures::kHybrid), tiny_config(c.vocab->size()), 4);
  std::mt19937_64 gen(5);
  for (auto* p : m.parameters()) p->value = testing::random_matrix(p->value.rows(), p->value.cols(), gen, 0.3);

  std::ostringstream dump;
  EvalOptions opts;
  opts.token_dump = &dump;
  const auto r = evaluate(m, c, opts);

  auto state = m.initial_state();
  const std::span<const std::int32_t> ids(c.ids);
  const Index n = static_cast<Index>(c.ids.size()) - 1;
  const Matrix<double> lp = m.log_probs(ids.first(n), n, 1, state, ForwardContext{false, RngKey(0), 0});
  double naive = 0.0;
  for (Index t = 0; t < n; ++t) naive -= lp(t, c.ids[static_cast<std::size_t>(t + 1)]);

  CHECK(r.token_count == n);
  CHECK(std::abs(r.total_nll_nats - naive) < 1e-9 * naive);

  std::istringstream rows(dump.str());
  std::string line;
  Index lines = 0;
  while (std::getline(rows, line)) ++lines;
  CHECK(lines == n);
}

TEST_CASE("evaluation is deterministic and restores the attention length") {
  const Corpus c = text_corpus(150, 3);
  LanguageModel<double> m(parse_architecture("|q|f a ff"), tiny_config(c.vocab->size()), 6);
  EvalOptions opts;
  opts.batch_size = 2;
  opts.attn_length = 32;
  const auto a = evaluate(m, c, opts);
  const auto b = evaluate(m, c, opts);
  CHECK(a.total_nll_nats == b.total_nll_nats);
  CHECK(a.attn_length == 32);
  CHECK(m.config().eval_attn_len == 256);
}

TEST_CASE("unknown characters contribute their source bytes") {
  // Train holds ASCII only; the valid split's two-byte character maps to <unk>.
  const std::string raw = std::string(90, 'a') + "b\xc3\xa9" + std::string(6, 'a') + "b";
  const auto splits = load_char_corpus(raw, {0.9, 0.1, 0.0});
  const Corpus& v = splits.valid;
  CHECK(v.utf8_bytes == 10);
  CHECK(v.bytes_between(0, v.size()) == 10);
  LanguageModel<double> m(parse_architecture("|f"), tiny_config(v.vocab->size()), 1);
  EvalOptions opts;
  opts.bptt = 4;
  const auto r = evaluate(m, v, opts);
  CHECK(r.token_count == static_cast<std::int64_t>(v.size()) - 1);
  CHECK(r.utf8_byte_count == v.bytes_between(1, v.size()));
}

TEST_CASE("evaluation input errors") {
  const Corpus c = text_corpus(10, 4);
  LanguageModel<double> m(parse_architecture("|f"), tiny_config(c.vocab->size()), 1);
  CHECK_THROWS_AS(evaluate(m, c), DataError);
  LanguageModel<double> wrong(parse_architecture("|f"), tiny_config(c.vocab->size() + 1), 1);
  EvalOptions opts;
  opts.bptt = 4;
  CHECK_THROWS_AS(evaluate(wrong, c, opts), DataError);
}
