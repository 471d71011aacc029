// SPDX-License-Identifier: Apache-2.0
#include "hrt/eval/evaluate.hpp"

#include <ostream>

#include "hrt/data/batching.hpp"
#include "hrt/errors.hpp"

namespace hrt {

template <typename T>
EvalReport evaluate(LanguageModel<T>& model, const Corpus& corpus, const EvalOptions& options) {
  if (options.batch_size < 1) throw ConfigError("evaluation batch size must be >= 1", "eval.batch_size");
  if (options.max_tokens < 0) throw ConfigError("max_tokens must be >= 0", "eval.max_tokens");
  const Index bptt = options.bptt > 0 ? options.bptt : model.config().bptt_len;
  const Index attn = options.attn_length > 0 ? options.attn_length : model.config().eval_attn_len;
  if (!corpus.vocab || corpus.vocab->size() != model.config().vocab_size) {
    throw DataError("corpus vocabulary does not match the model's vocab_size " +
                    std::to_string(model.config().vocab_size));
  }

  std::vector<std::span<const std::int32_t>> spans;
  std::int64_t targets = 0;
  for (auto art : corpus.articles()) {
    if (art.size() < 2) continue;
    auto n = static_cast<std::int64_t>(art.size()) - 1;
    if (options.max_tokens > 0 && targets + n > options.max_tokens) {
      n = options.max_tokens - targets;
      art = art.first(static_cast<std::size_t>(n + 1));
    }
    spans.push_back(art);
    targets += n;
    if (options.max_tokens > 0 && targets >= options.max_tokens) break;
  }
  if (targets < bptt) {
    throw DataError("evaluation text has " + std::to_string(targets) + " targets, fewer than one window of " +
                    std::to_string(bptt));
  }

  std::int64_t bytes = 0;
  for (auto span : spans) {
    const auto first = static_cast<std::size_t>(span.data() - corpus.ids.data());
    bytes += corpus.bytes_between(first + 1, first + span.size());
  }
  const auto base = spans.front().data() - corpus.ids.data();
  const std::int32_t pad = corpus.vocab->pad_id();
  const auto batches = corpus.article_starts.empty()
                           ? make_eval_batches(spans.front(), options.batch_size, bptt, pad)
                           : make_article_batches(spans, options.batch_size, bptt, pad);

  const Index saved_attn = model.config().eval_attn_len;
  model.set_eval_attn_length(attn);
  double total = 0.0;
  std::int64_t counted = 0;
  if (options.token_dump) options.token_dump->precision(17);
  try {
    auto state = model.initial_state();
    const ForwardContext ctx{false, RngKey(0), 0};
    for (const auto& sb : batches) {
      state.reset_columns(sb.stream_reset);
      const Vector<T> lp = model.forward(sb.inputs, sb.targets, sb.time, sb.batch, state, ctx);
      for (Index i = 0; i < lp.size(); ++i) {
        if (!sb.loss_mask[static_cast<std::size_t>(i)]) continue;
        const double nll = -static_cast<double>(lp(i));
        total += nll;
        ++counted;
        if (options.token_dump) {
          *options.token_dump << (base + sb.target_offsets[static_cast<std::size_t>(i)]) << ','
                              << sb.targets[static_cast<std::size_t>(i)] << ',' << nll << '\n';
        }
      }
    }
  } catch (...) {
    model.set_eval_attn_length(saved_attn);
    throw;
  }
  model.set_eval_attn_length(saved_attn);
  if (counted != targets) throw DataError("evaluation coverage mismatch");
  return EvalReport::from_totals(total, counted, bytes, attn);
}

template EvalReport evaluate<float>(LanguageModel<float>&, const Corpus&, const EvalOptions&);
template EvalReport evaluate<double>(LanguageModel<double>&, const Corpus&, const EvalOptions&);

}  // namespace hrt
